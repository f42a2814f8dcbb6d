"""Copy-on-write clone engine.

Shells are cloned across organizations with fresh ids but the same asset id;
submodels stay remote read-only references until the first write, which
triggers a deep local copy. Also computes the consolidated cross-organization
view of everything known about one asset.
"""
from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from .bus import utcnow_iso
from .errors import (AlreadyExists, NotARemoteReference, NotFound, SelfClone,
                     SourceUnreachable, VersionGone)
from .model import (CloneProvenance, Collection, FileAttachment, Shell,
                    Submodel)
from .registry import discover_by_asset_id
from .repository import ROLE_EXTERNAL, Repository

MODE_SHELL_ONLY = "shell-only"
MODE_WITH_SUBMODELS = "with-submodels"


@dataclass(frozen=True)
class CloneRequest:
    source_org_id: str
    source_shell_id: str
    source_version: int
    target_org_id: str
    requested_by: str
    mode: str = MODE_SHELL_ONLY

    @staticmethod
    def from_dict(d: dict) -> "CloneRequest":
        return CloneRequest(source_org_id=d["sourceOrgId"],
                            source_shell_id=d["sourceShellId"],
                            source_version=d["sourceVersion"],
                            target_org_id=d["targetOrgId"],
                            requested_by=d.get("requestedBy", ""),
                            mode=d.get("mode", MODE_SHELL_ONLY))

    def to_dict(self) -> dict:
        return {"sourceOrgId": self.source_org_id, "sourceShellId": self.source_shell_id,
                "sourceVersion": self.source_version, "targetOrgId": self.target_org_id,
                "requestedBy": self.requested_by, "mode": self.mode}


@dataclass
class SubmodelContribution:
    submodel_id: str
    shadows: Optional[str] = None  # id of the submodel this one copies

    def to_dict(self) -> dict:
        return {"submodelId": self.submodel_id, "shadows": self.shadows}


@dataclass
class Contribution:
    org_id: str
    shell_id: str
    submodels: list[SubmodelContribution] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"orgId": self.org_id, "shellId": self.shell_id,
                "submodels": [s.to_dict() for s in self.submodels]}


@dataclass
class ConsolidatedAssetView:
    asset_id: str
    contributions: list[Contribution] = field(default_factory=list)
    partial: bool = False

    def to_dict(self) -> dict:
        return {"assetId": self.asset_id, "partial": self.partial,
                "contributions": [c.to_dict() for c in self.contributions]}


class RepoExternalReader:
    """Read-only view of another organization's repository, equivalent to
    going through its external (stable) listener."""

    def __init__(self, repo: Repository):
        self.repo = repo

    def get_shell(self, shell_id: str) -> Shell:
        return self.repo.get_shell(shell_id, role=ROLE_EXTERNAL)

    def get_submodel(self, submodel_id: str) -> Submodel:
        return self.repo.get_submodel(submodel_id, role=ROLE_EXTERNAL)

    def get_blob(self, digest: str) -> Optional[bytes]:
        try:
            return self.repo.blobs.get(digest)
        except NotFound:
            return None


class FederationDirectory:
    """Lookup of foreign organizations' readers and external registries.
    The orchestrator provides a fully wired instance; tests may hand-build one."""

    def __init__(self):
        self.readers: dict[str, object] = {}
        self.external_registries: list = []

    def add_org(self, org_id: str, repo: Repository):
        self.readers[org_id] = RepoExternalReader(repo)

    def reader(self, org_id: str):
        reader = self.readers.get(org_id)
        if reader is None:
            raise SourceUnreachable(f"no reachable repository for org {org_id!r}")
        return reader


def _collect_blob_digests(elements) -> set[str]:
    out = set()
    for el in elements:
        if isinstance(el, FileAttachment):
            out.add(el.digest)
        elif isinstance(el, Collection):
            out |= _collect_blob_digests(el.children)
    return out


class CloneEngine:
    """Per-organization clone component. Owns the remote-reference bookkeeping
    that drives the repository's copy-on-write trigger."""

    def __init__(self, org_id: str, repo: Repository, directory: FederationDirectory):
        self.org_id = org_id
        self.repo = repo
        self.directory = directory
        self._lock = threading.RLock()
        # idempotence: (source shell id, source version, target org) -> clone id
        self._clone_index: dict[tuple[str, int, str], str] = {}
        # remote submodel id -> (clone shell id, source org) while uncopied
        self._remote_refs: dict[str, tuple[str, str]] = {}
        # remote submodel id -> local copy id after copy-on-write
        self._copied: dict[str, str] = {}
        repo.cow_resolver = self._cow_resolve

    def _fresh_id(self) -> str:
        return f"urn:{self.org_id}:clone:{uuid.uuid4()}"

    def clone_shell(self, req: CloneRequest) -> Shell:
        if req.source_org_id == req.target_org_id:
            raise SelfClone(f"cannot clone within org {req.source_org_id!r}")
        if req.target_org_id != self.org_id:
            raise SourceUnreachable(
                f"clone engine of {self.org_id!r} cannot create clones in {req.target_org_id!r}")
        key = (req.source_shell_id, req.source_version, req.target_org_id)
        with self._lock:
            existing = self._clone_index.get(key)
            if existing is not None:
                return self.repo.get_shell(existing)
            reader = self.directory.reader(req.source_org_id)
            try:
                source = reader.get_shell(req.source_shell_id)
            except NotFound as exc:
                raise SourceUnreachable(str(exc)) from exc
            if source.version != req.source_version:
                raise VersionGone(
                    f"source {req.source_shell_id} is at v{source.version}, "
                    f"requested v{req.source_version}")
            provenance = CloneProvenance(source_id=source.id,
                                         source_version=source.version,
                                         source_org=req.source_org_id,
                                         cloned_at=utcnow_iso())
            clone_id = self._fresh_id()
            if req.mode == MODE_WITH_SUBMODELS:
                refs = []
                for ref in source.submodel_refs:
                    refs.append(self._copy_submodel(reader, ref, req.source_org_id).id)
                clone = Shell(id=clone_id, asset_id=source.asset_id,
                              id_short=source.id_short, submodel_refs=tuple(refs),
                              provenance=provenance, version=1)
            else:
                clone = Shell(id=clone_id, asset_id=source.asset_id,
                              id_short=source.id_short,
                              submodel_refs=tuple(source.submodel_refs),
                              provenance=provenance, version=1)
                for ref in source.submodel_refs:
                    self._remote_refs[ref] = (clone_id, req.source_org_id)
            self.repo.create_shell(clone)
            self._clone_index[key] = clone_id
            return clone

    def _copy_submodel(self, reader, source_submodel_id: str, source_org: str) -> Submodel:
        try:
            source = reader.get_submodel(source_submodel_id)
        except NotFound as exc:
            raise SourceUnreachable(str(exc)) from exc
        provenance = CloneProvenance(source_id=source.id, source_version=source.version,
                                     source_org=source_org, cloned_at=utcnow_iso())
        copy = Submodel(id=self._fresh_id(), id_short=source.id_short,
                        semantic_id=source.semantic_id, elements=source.elements,
                        provenance=provenance, version=1)
        for digest in _collect_blob_digests(source.elements):
            data = reader.get_blob(digest)
            if data is not None:
                self.repo.blobs.put(data)
        self.repo.create_submodel(copy)
        return copy

    def copy_on_write_submodel(self, clone_shell_id: str, source_submodel_id: str) -> Submodel:
        with self._lock:
            entry = self._remote_refs.get(source_submodel_id)
            if entry is None or entry[0] != clone_shell_id:
                raise NotARemoteReference(
                    f"{source_submodel_id} is not an uncopied remote reference of {clone_shell_id}")
            _, source_org = entry
            reader = self.directory.reader(source_org)
            copy = self._copy_submodel(reader, source_submodel_id, source_org)
            shell = self.repo.get_shell(clone_shell_id)
            refs = tuple(copy.id if r == source_submodel_id else r
                         for r in shell.submodel_refs)
            self.repo.update_shell(replace(shell, submodel_refs=refs))
            del self._remote_refs[source_submodel_id]
            self._copied[source_submodel_id] = copy.id
            return copy

    def _cow_resolve(self, submodel_id: str) -> Optional[str]:
        """Repository write hook: first write to a remote reference copies it."""
        with self._lock:
            if submodel_id in self._copied:
                return self._copied[submodel_id]
            entry = self._remote_refs.get(submodel_id)
            if entry is None:
                return None
            return self.copy_on_write_submodel(entry[0], submodel_id).id

    def add_new_submodel(self, clone_shell_id: str, submodel: Submodel) -> Submodel:
        """Attach an original (non-copied) submodel to a shell."""
        with self._lock:
            shell = self.repo.get_shell(clone_shell_id)
            if submodel.id in shell.submodel_refs:
                raise AlreadyExists(f"{submodel.id} already referenced by {clone_shell_id}")
            created = self.repo.create_submodel(submodel)
            self.repo.update_shell(
                replace(shell, submodel_refs=shell.submodel_refs + (created.id,)))
            return created

    def consolidated_view(self, asset_id: str) -> ConsolidatedAssetView:
        discovery = discover_by_asset_id(asset_id, self.directory.external_registries)
        view = ConsolidatedAssetView(asset_id=asset_id, partial=discovery.partial)
        for desc in discovery.descriptors:  # already ordered (orgId, shellId)
            try:
                reader = self.directory.reader(desc.org_id)
                shell = reader.get_shell(desc.shell_id)
            except (SourceUnreachable, NotFound):
                view.partial = True
                continue
            contribution = Contribution(org_id=desc.org_id, shell_id=desc.shell_id)
            for ref in shell.submodel_refs:
                try:
                    sm = reader.get_submodel(ref)
                except NotFound:
                    # still a remote reference hosted by another organization
                    contribution.submodels.append(SubmodelContribution(submodel_id=ref))
                    continue
                shadows = sm.provenance.source_id if sm.provenance else None
                contribution.submodels.append(
                    SubmodelContribution(submodel_id=ref, shadows=shadows))
            view.contributions.append(contribution)
        return view
