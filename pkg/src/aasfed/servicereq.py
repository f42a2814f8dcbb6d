"""Service-request submodel element collection: builder, detection, and the
allowed status lifecycle (draft -> submitted -> acknowledged | expired)."""
from __future__ import annotations

from typing import Optional

from .errors import InvalidEntity
from .model import Collection, Property, Submodel, find_element

SERVICE_TYPES = ("inspection", "repair", "maintenance", "spare-parts")

STATUS_TRANSITIONS = {
    "draft": {"submitted"},
    "submitted": {"acknowledged", "expired"},
    "acknowledged": set(),
    "expired": set(),
}


def build_service_request_smc(id_short: str, requester_org: str, provider_org: str,
                              contact: str, fault_description: str,
                              requested_service_type: str,
                              on_site_contact: str = "") -> Collection:
    if requested_service_type not in SERVICE_TYPES:
        raise InvalidEntity(
            f"requestedServiceType must be one of {SERVICE_TYPES}")
    return Collection(id_short=id_short, children=(
        Property(id_short="requesterOrg", value_type="string", value=requester_org),
        Property(id_short="providerOrg", value_type="string", value=provider_org),
        Property(id_short="contact", value_type="string", value=contact),
        Property(id_short="faultDescription", value_type="string", value=fault_description),
        Property(id_short="requestedServiceType", value_type="string",
                 value=requested_service_type),
        Property(id_short="status", value_type="string", value="draft"),
        Property(id_short="onSiteContact", value_type="string", value=on_site_contact),
        Collection(id_short="attachments", children=()),
    ))


def is_service_request(element) -> bool:
    if not isinstance(element, Collection):
        return False
    names = {c.id_short for c in element.children}
    return {"requesterOrg", "providerOrg", "requestedServiceType", "status"} <= names


def _child_value(collection: Collection, name: str) -> Optional[str]:
    for c in collection.children:
        if c.id_short == name and isinstance(c, Property):
            return c.value
    return None


def smc_status(submodel: Submodel, smc_path: str) -> str:
    prop = find_element(submodel, f"{smc_path}.status")
    return prop.value


def find_service_requests(submodel: Submodel) -> list[Collection]:
    return [el for el in submodel.elements if is_service_request(el)]


def provider_org_of(smc: Collection) -> Optional[str]:
    return _child_value(smc, "providerOrg")


def status_of(smc: Collection) -> Optional[str]:
    return _child_value(smc, "status")


def check_status_transition(old: str, new: str):
    allowed = STATUS_TRANSITIONS.get(old)
    if allowed is None or new not in allowed:
        raise InvalidEntity(f"illegal service-request status transition {old!r} -> {new!r}")
