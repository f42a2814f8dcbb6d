"""Shell/submodel metamodel, identifier rules, and the canonical JSON form.

Every digest, snapshot, and wire payload in the federation is derived from
the canonical byte form produced here: object keys sorted, no insignificant
whitespace, strings NFC-normalized, numbers in shortest round-trip form.
"""
from __future__ import annotations

import base64
import hashlib
import json
import re
import unicodedata
from dataclasses import dataclass, field, replace
from typing import Optional, Union

from .errors import InvalidEntity, MalformedEncoding, TypeMismatch

MAX_IDENTIFIER_LEN = 2048
MAX_COLLECTION_DEPTH = 16

VALUE_TYPES = ("string", "integer", "double", "boolean")

_ID_SHORT_RE = re.compile(r"^[A-Za-z0-9_-]+$")


def validate_identifier(value: str) -> str:
    if not isinstance(value, str) or not value:
        raise InvalidEntity("identifier must be a non-empty string")
    if len(value) > MAX_IDENTIFIER_LEN:
        raise InvalidEntity(f"identifier longer than {MAX_IDENTIFIER_LEN} chars")
    if any(c.isspace() for c in value):
        raise InvalidEntity(f"identifier contains whitespace: {value!r}")
    return value


def encode_id_for_path(identifier: str) -> str:
    """Unpadded base64url of the UTF-8 identifier, for use in URL paths."""
    validate_identifier(identifier)
    return base64.urlsafe_b64encode(identifier.encode("utf-8")).decode("ascii").rstrip("=")


def decode_id_from_path(encoded: str) -> str:
    if not encoded:
        raise MalformedEncoding("empty path segment")
    pad = "=" * (-len(encoded) % 4)
    try:
        raw = base64.urlsafe_b64decode(encoded + pad)
        value = raw.decode("utf-8")
    except Exception as exc:
        raise MalformedEncoding(f"not base64url: {encoded!r}") from exc
    try:
        return validate_identifier(value)
    except InvalidEntity as exc:
        raise MalformedEncoding(str(exc)) from exc


def _nfc(obj):
    if isinstance(obj, str):
        return unicodedata.normalize("NFC", obj)
    if isinstance(obj, dict):
        return {_nfc(k): _nfc(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_nfc(v) for v in obj]
    return obj


def canonical_json(obj) -> bytes:
    """Deterministic JSON bytes: sorted keys, compact, NFC strings.

    Python's float repr is already the shortest round-trip form.
    """
    return json.dumps(_nfc(obj), sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False, allow_nan=False).encode("utf-8")


def parse_value(value_type: str, raw):
    """Coerce a raw (possibly string-typed) value to its declared type."""
    if value_type == "string":
        if isinstance(raw, str):
            return raw
        raise TypeMismatch(f"expected string, got {type(raw).__name__}")
    if value_type == "boolean":
        if isinstance(raw, bool):
            return raw
        if isinstance(raw, str) and raw in ("true", "false"):
            return raw == "true"
        raise TypeMismatch(f"value {raw!r} does not parse as boolean")
    if value_type == "integer":
        if isinstance(raw, bool):
            raise TypeMismatch("boolean is not an integer")
        if isinstance(raw, int):
            return raw
        if isinstance(raw, str):
            try:
                return int(raw, 10)
            except ValueError:
                pass
        raise TypeMismatch(f"value {raw!r} does not parse as integer")
    if value_type == "double":
        if isinstance(raw, bool):
            raise TypeMismatch("boolean is not a double")
        if isinstance(raw, (int, float)):
            return float(raw)
        if isinstance(raw, str):
            try:
                return float(raw)
            except ValueError:
                pass
        raise TypeMismatch(f"value {raw!r} does not parse as double")
    raise TypeMismatch(f"unknown valueType {value_type!r}")


@dataclass(frozen=True)
class Property:
    id_short: str
    value_type: str
    value: Union[str, int, float, bool]

    kind = "Property"

    def validate(self, depth: int = 1):
        _check_id_short(self.id_short)
        if self.value_type not in VALUE_TYPES:
            raise InvalidEntity(f"unknown valueType {self.value_type!r}")
        try:
            parse_value(self.value_type, self.value)
        except TypeMismatch as exc:
            raise InvalidEntity(str(exc)) from exc

    def to_dict(self):
        return {"kind": "Property", "idShort": self.id_short,
                "valueType": self.value_type, "value": self.value}


@dataclass(frozen=True)
class Collection:
    id_short: str
    children: tuple = ()

    kind = "Collection"

    def validate(self, depth: int = 1):
        _check_id_short(self.id_short)
        if depth > MAX_COLLECTION_DEPTH:
            raise InvalidEntity(f"collection nesting exceeds {MAX_COLLECTION_DEPTH}")
        _check_sibling_elements(self.children, depth + 1)

    def to_dict(self):
        return {"kind": "Collection", "idShort": self.id_short,
                "children": [c.to_dict() for c in self.children]}


@dataclass(frozen=True)
class FileAttachment:
    id_short: str
    content_type: str
    digest: str  # hex SHA-256 of blob content
    length: int

    kind = "FileAttachment"

    def validate(self, depth: int = 1):
        _check_id_short(self.id_short)
        if not isinstance(self.content_type, str) or not self.content_type:
            raise InvalidEntity("file attachment needs a contentType")
        if not re.fullmatch(r"[0-9a-f]{64}", self.digest or ""):
            raise InvalidEntity("file attachment digest must be 64 hex chars")
        if not isinstance(self.length, int) or self.length < 0:
            raise InvalidEntity("file attachment length must be >= 0")

    def to_dict(self):
        return {"kind": "FileAttachment", "idShort": self.id_short,
                "contentType": self.content_type, "digest": self.digest,
                "length": self.length}


SubmodelElement = Union[Property, Collection, FileAttachment]


def _check_id_short(id_short: str):
    if not isinstance(id_short, str) or not _ID_SHORT_RE.fullmatch(id_short):
        raise InvalidEntity(f"bad idShort {id_short!r} (allowed: [A-Za-z0-9_-]+)")


def _check_sibling_elements(elements, depth: int):
    seen = set()
    for el in elements:
        if not isinstance(el, (Property, Collection, FileAttachment)):
            raise InvalidEntity(f"not a submodel element: {el!r}")
        el.validate(depth)
        if el.id_short in seen:
            raise InvalidEntity(f"duplicate sibling idShort {el.id_short!r}")
        seen.add(el.id_short)


@dataclass(frozen=True)
class CloneProvenance:
    source_id: str            # shell or submodel id this entity was cloned from
    source_version: int
    source_org: str
    cloned_at: str            # UTC ISO-8601

    def validate(self):
        validate_identifier(self.source_id)
        if not isinstance(self.source_version, int) or self.source_version < 1:
            raise InvalidEntity("provenance sourceVersion must be >= 1")
        if not self.source_org:
            raise InvalidEntity("provenance sourceOrganization missing")
        if not self.cloned_at:
            raise InvalidEntity("provenance clonedAt missing")

    def to_dict(self):
        return {"sourceId": self.source_id, "sourceVersion": self.source_version,
                "sourceOrganization": self.source_org, "clonedAt": self.cloned_at}


@dataclass(frozen=True)
class Shell:
    id: str
    asset_id: str
    id_short: str
    submodel_refs: tuple = ()
    provenance: Optional[CloneProvenance] = None
    version: int = 1

    entity_kind = "shell"

    def validate(self):
        validate_identifier(self.id)
        validate_identifier(self.asset_id)
        if not isinstance(self.id_short, str) or not self.id_short:
            raise InvalidEntity("shell idShort must be non-empty")
        refs = list(self.submodel_refs)
        if len(set(refs)) != len(refs):
            raise InvalidEntity("duplicate submodel references")
        for ref in refs:
            validate_identifier(ref)
        if self.provenance is not None:
            self.provenance.validate()
        if not isinstance(self.version, int) or self.version < 1:
            raise InvalidEntity("version must be >= 1")

    def to_dict(self):
        d = {"id": self.id, "assetId": self.asset_id, "idShort": self.id_short,
             "submodelRefs": list(self.submodel_refs), "version": self.version}
        if self.provenance is not None:
            d["provenance"] = self.provenance.to_dict()
        return d


@dataclass(frozen=True)
class Submodel:
    id: str
    id_short: str
    semantic_id: Optional[str] = None
    elements: tuple = ()
    provenance: Optional[CloneProvenance] = None
    version: int = 1

    entity_kind = "submodel"

    def validate(self):
        validate_identifier(self.id)
        if not isinstance(self.id_short, str) or not self.id_short:
            raise InvalidEntity("submodel idShort must be non-empty")
        if self.semantic_id is not None:
            validate_identifier(self.semantic_id)
        _check_sibling_elements(self.elements, 1)
        if self.provenance is not None:
            self.provenance.validate()
        if not isinstance(self.version, int) or self.version < 1:
            raise InvalidEntity("version must be >= 1")

    def to_dict(self):
        d = {"id": self.id, "idShort": self.id_short,
             "elements": [e.to_dict() for e in self.elements],
             "version": self.version}
        if self.semantic_id is not None:
            d["semanticId"] = self.semantic_id
        if self.provenance is not None:
            d["provenance"] = self.provenance.to_dict()
        return d


Entity = Union[Shell, Submodel]


def canonicalize(entity: Entity) -> bytes:
    entity.validate()
    return canonical_json(entity.to_dict())


def content_digest(entity: Entity) -> bytes:
    """32-byte SHA-256 of the canonical form."""
    return hashlib.sha256(canonicalize(entity)).digest()


def content_digest_hex(entity: Entity) -> str:
    return content_digest(entity).hex()


# --- parsing back from dicts (wire / log / snapshot formats) ---

def element_from_dict(d: dict) -> SubmodelElement:
    try:
        kind = d["kind"]
        if kind == "Property":
            return Property(id_short=d["idShort"], value_type=d["valueType"],
                            value=d["value"])
        if kind == "Collection":
            return Collection(id_short=d["idShort"],
                              children=tuple(element_from_dict(c) for c in d["children"]))
        if kind == "FileAttachment":
            return FileAttachment(id_short=d["idShort"], content_type=d["contentType"],
                                  digest=d["digest"], length=d["length"])
    except (KeyError, TypeError) as exc:
        raise InvalidEntity(f"malformed element: {exc}") from exc
    raise InvalidEntity(f"unknown element kind {d.get('kind')!r}")


def _provenance_from_dict(d: Optional[dict]) -> Optional[CloneProvenance]:
    if d is None:
        return None
    try:
        return CloneProvenance(source_id=d["sourceId"], source_version=d["sourceVersion"],
                               source_org=d["sourceOrganization"], cloned_at=d["clonedAt"])
    except (KeyError, TypeError) as exc:
        raise InvalidEntity(f"malformed provenance: {exc}") from exc


def shell_from_dict(d: dict) -> Shell:
    try:
        shell = Shell(id=d["id"], asset_id=d["assetId"], id_short=d["idShort"],
                      submodel_refs=tuple(d.get("submodelRefs", [])),
                      provenance=_provenance_from_dict(d.get("provenance")),
                      version=d.get("version", 1))
    except (KeyError, TypeError) as exc:
        raise InvalidEntity(f"malformed shell: {exc}") from exc
    shell.validate()
    return shell


def submodel_from_dict(d: dict) -> Submodel:
    try:
        sm = Submodel(id=d["id"], id_short=d["idShort"],
                      semantic_id=d.get("semanticId"),
                      elements=tuple(element_from_dict(e) for e in d.get("elements", [])),
                      provenance=_provenance_from_dict(d.get("provenance")),
                      version=d.get("version", 1))
    except (KeyError, TypeError) as exc:
        raise InvalidEntity(f"malformed submodel: {exc}") from exc
    sm.validate()
    return sm


def entity_from_dict(kind: str, d: dict) -> Entity:
    if kind == "shell":
        return shell_from_dict(d)
    if kind == "submodel":
        return submodel_from_dict(d)
    raise InvalidEntity(f"unknown entity kind {kind!r}")


# --- element path navigation (dot-separated idShort paths) ---

def find_element(submodel: Submodel, id_short_path: str) -> SubmodelElement:
    """Resolve a dot-separated idShort path; raises KeyError on a miss."""
    parts = id_short_path.split(".") if id_short_path else []
    if not parts:
        raise KeyError(id_short_path)
    current = submodel.elements
    el = None
    for i, part in enumerate(parts):
        el = next((e for e in current if e.id_short == part), None)
        if el is None:
            raise KeyError(id_short_path)
        if i < len(parts) - 1:
            if not isinstance(el, Collection):
                raise KeyError(id_short_path)
            current = el.children
    return el


def replace_element(submodel: Submodel, id_short_path: str,
                    new_element: SubmodelElement) -> Submodel:
    """Return a copy of the submodel with the element at the path replaced."""
    parts = id_short_path.split(".")

    def rewrite(elements: tuple, idx: int) -> tuple:
        out = []
        hit = False
        for e in elements:
            if e.id_short == parts[idx]:
                hit = True
                if idx == len(parts) - 1:
                    out.append(new_element)
                else:
                    if not isinstance(e, Collection):
                        raise KeyError(id_short_path)
                    out.append(replace(e, children=rewrite(e.children, idx + 1)))
            else:
                out.append(e)
        if not hit:
            raise KeyError(id_short_path)
        return tuple(out)

    return replace(submodel, elements=rewrite(submodel.elements, 0))
