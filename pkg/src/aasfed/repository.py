"""Per-organization store of shells and submodels.

Access policy: the internal listener may mutate, the external listener is
read-only and, after a promotion, serves the pinned stable snapshot instead
of the live state. Every successful mutation publishes exactly one event.
"""
from __future__ import annotations

import base64
import hashlib
import json
import os
import threading
from dataclasses import dataclass, replace
from typing import Callable, Optional

from . import bus as busmod
from .bus import Event, EventBus
from .errors import (AlreadyExists, Forbidden, InvalidEntity, NotFound,
                     PathNotFound, TypeMismatch, VersionConflict)
from .model import (Collection, FileAttachment, Property, Shell, Submodel,
                    encode_id_for_path, entity_from_dict, find_element,
                    parse_value, replace_element)

ROLE_INTERNAL = "internal"
ROLE_EXTERNAL = "external"

# PATCH is a mutating verb and follows the same internal-only rule as POST/PUT.
ALLOWED_VERBS = {
    ROLE_INTERNAL: frozenset({"GET", "POST", "PUT", "DELETE", "PATCH"}),
    ROLE_EXTERNAL: frozenset({"GET"}),
}

DEFAULT_PAGE_LIMIT = 100


@dataclass(frozen=True)
class Organization:
    org_id: str
    display_name: str
    internal_base_url: str
    external_base_url: str

    def validate(self):
        import re
        if not re.fullmatch(r"[a-z0-9-]+", self.org_id or ""):
            raise InvalidEntity(f"bad orgId {self.org_id!r} (allowed: [a-z0-9-]+)")


def check_access(role: str, verb: str):
    allowed = ALLOWED_VERBS.get(role)
    if allowed is None:
        raise Forbidden(f"unknown role {role!r}")
    if verb not in allowed:
        raise Forbidden(f"role {role!r} may not {verb}")


def _encode_cursor(last_id: str) -> str:
    return base64.urlsafe_b64encode(last_id.encode()).decode().rstrip("=")


def _decode_cursor(cursor: str) -> str:
    pad = "=" * (-len(cursor) % 4)
    return base64.urlsafe_b64decode(cursor + pad).decode()


@dataclass
class Page:
    items: list
    next_cursor: Optional[str]


class BlobStore:
    """Content-addressed blob storage, in memory with optional disk spill."""

    def __init__(self, directory: Optional[str] = None):
        self.directory = directory
        self._blobs: dict[str, bytes] = {}
        if directory:
            os.makedirs(directory, exist_ok=True)
            for name in os.listdir(directory):
                with open(os.path.join(directory, name), "rb") as fh:
                    self._blobs[name] = fh.read()

    def put(self, data: bytes) -> str:
        digest = hashlib.sha256(data).hexdigest()
        if digest not in self._blobs:
            self._blobs[digest] = data
            if self.directory:
                with open(os.path.join(self.directory, digest), "wb") as fh:
                    fh.write(data)
        return digest

    def get(self, digest: str) -> bytes:
        try:
            return self._blobs[digest]
        except KeyError:
            raise NotFound(f"no blob {digest}") from None

    def __contains__(self, digest: str) -> bool:
        return digest in self._blobs

    def __len__(self):
        return len(self._blobs)


class Repository:
    """Linearizable shell/submodel store with write-ahead log recovery."""

    def __init__(self, org_id: str, bus: Optional[EventBus] = None,
                 data_dir: Optional[str] = None):
        self.org_id = org_id
        self.bus = bus
        self.data_dir = data_dir
        self.shells: dict[str, Shell] = {}
        self.submodels: dict[str, Submodel] = {}
        self.blobs = BlobStore(os.path.join(data_dir, "blobs") if data_dir else None)
        self._lock = threading.RLock()
        self._wal_path = os.path.join(data_dir, "wal.jsonl") if data_dir else None
        # stable view pinned by a promotion; None until the first promote
        self._stable_shells: Optional[dict[str, Shell]] = None
        self._stable_submodels: Optional[dict[str, Submodel]] = None
        # set by the clone engine: maps a remote submodel id to a local copy id,
        # creating the copy on first write (copy-on-write trigger)
        self.cow_resolver: Optional[Callable[[str], Optional[str]]] = None
        if self._wal_path:
            os.makedirs(data_dir, exist_ok=True)
            self._replay_wal()

    # --- WAL ---

    def _replay_wal(self):
        if not os.path.exists(self._wal_path):
            return
        with open(self._wal_path, encoding="utf-8") as fh:
            for line in fh:
                rec = json.loads(line)
                store = self.shells if rec["kind"] == "shell" else self.submodels
                if rec["op"] == "delete":
                    store.pop(rec["id"], None)
                else:
                    entity = entity_from_dict(rec["kind"], rec["data"])
                    store[entity.id] = entity

    def _wal_append(self, op: str, kind: str, entity=None, entity_id: str = None):
        if not self._wal_path:
            return
        rec = {"op": op, "kind": kind}
        if entity is not None:
            rec["data"] = entity.to_dict()
        if entity_id is not None:
            rec["id"] = entity_id
        with open(self._wal_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    # --- events ---

    def _publish(self, entity_kind: str, entity_id: str, action: str,
                 version: Optional[int], body: Optional[dict]):
        if self.bus is None:
            return
        encoded = encode_id_for_path(entity_id)
        if entity_kind == "shell":
            topic = busmod.shell_topic(self.org_id, encoded, action)
        else:
            topic = busmod.submodel_topic(self.org_id, encoded, action)
        self.bus.publish(Event(topic=topic, org_id=self.org_id,
                               entity_kind=entity_kind, entity_id=entity_id,
                               action=action, version=version, body=body),
                         publisher=f"repo/{self.org_id}")

    # --- stable view ---

    def set_stable(self, shells: dict[str, Shell], submodels: dict[str, Submodel]):
        with self._lock:
            self._stable_shells = dict(shells)
            self._stable_submodels = dict(submodels)

    @property
    def promoted(self) -> bool:
        return self._stable_shells is not None

    def _view(self, kind: str, role: str) -> dict:
        if role == ROLE_EXTERNAL:
            stable = self._stable_shells if kind == "shell" else self._stable_submodels
            return stable if stable is not None else {}
        return self.shells if kind == "shell" else self.submodels

    # --- shells ---

    def create_shell(self, shell: Shell, role: str = ROLE_INTERNAL) -> Shell:
        check_access(role, "POST")
        shell.validate()
        if shell.version != 1:
            raise InvalidEntity("new shells start at version 1")
        with self._lock:
            if shell.id in self.shells:
                raise AlreadyExists(f"shell {shell.id} exists")
            self.shells[shell.id] = shell
            self._wal_append("put", "shell", shell)
        self._publish("shell", shell.id, "created", shell.version, shell.to_dict())
        return shell

    def get_shell(self, shell_id: str, role: str = ROLE_INTERNAL) -> Shell:
        check_access(role, "GET")
        with self._lock:
            view = self._view("shell", role)
            if shell_id not in view:
                raise NotFound(f"shell {shell_id}")
            return view[shell_id]

    def update_shell(self, shell: Shell, role: str = ROLE_INTERNAL) -> Shell:
        check_access(role, "PUT")
        shell.validate()
        with self._lock:
            stored = self.shells.get(shell.id)
            if stored is None:
                raise NotFound(f"shell {shell.id}")
            if shell.version != stored.version:
                raise VersionConflict(
                    f"shell {shell.id}: supplied v{shell.version}, stored v{stored.version}")
            updated = replace(shell, version=stored.version + 1)
            self.shells[shell.id] = updated
            self._wal_append("put", "shell", updated)
        self._publish("shell", updated.id, "updated", updated.version, updated.to_dict())
        return updated

    def delete_shell(self, shell_id: str, role: str = ROLE_INTERNAL):
        check_access(role, "DELETE")
        with self._lock:
            if shell_id not in self.shells:
                raise NotFound(f"shell {shell_id}")
            version = self.shells[shell_id].version
            del self.shells[shell_id]
            self._wal_append("delete", "shell", entity_id=shell_id)
        self._publish("shell", shell_id, "deleted", version, None)

    def list_shells(self, role: str = ROLE_INTERNAL, cursor: Optional[str] = None,
                    limit: int = DEFAULT_PAGE_LIMIT) -> Page:
        check_access(role, "GET")
        with self._lock:
            ids = sorted(self._view("shell", role))
            view = self._view("shell", role)
            if cursor:
                after = _decode_cursor(cursor)
                ids = [i for i in ids if i > after]
            chunk = ids[:limit]
            items = [view[i] for i in chunk]
        next_cursor = _encode_cursor(chunk[-1]) if len(chunk) == limit and len(ids) > limit else None
        return Page(items=items, next_cursor=next_cursor)

    # --- submodels ---

    def create_submodel(self, sm: Submodel, role: str = ROLE_INTERNAL) -> Submodel:
        check_access(role, "POST")
        sm.validate()
        if sm.version != 1:
            raise InvalidEntity("new submodels start at version 1")
        with self._lock:
            if sm.id in self.submodels:
                raise AlreadyExists(f"submodel {sm.id} exists")
            self.submodels[sm.id] = sm
            self._wal_append("put", "submodel", sm)
        self._publish("submodel", sm.id, "created", sm.version, sm.to_dict())
        return sm

    def get_submodel(self, sm_id: str, role: str = ROLE_INTERNAL) -> Submodel:
        check_access(role, "GET")
        with self._lock:
            view = self._view("submodel", role)
            if sm_id not in view:
                raise NotFound(f"submodel {sm_id}")
            return view[sm_id]

    def update_submodel(self, sm: Submodel, role: str = ROLE_INTERNAL) -> Submodel:
        check_access(role, "PUT")
        sm.validate()
        with self._lock:
            stored = self.submodels.get(sm.id)
            if stored is None:
                raise NotFound(f"submodel {sm.id}")
            if sm.version != stored.version:
                raise VersionConflict(
                    f"submodel {sm.id}: supplied v{sm.version}, stored v{stored.version}")
            updated = replace(sm, version=stored.version + 1)
            self.submodels[sm.id] = updated
            self._wal_append("put", "submodel", updated)
        self._publish("submodel", updated.id, "updated", updated.version, updated.to_dict())
        return updated

    def delete_submodel(self, sm_id: str, role: str = ROLE_INTERNAL):
        check_access(role, "DELETE")
        with self._lock:
            if sm_id not in self.submodels:
                raise NotFound(f"submodel {sm_id}")
            version = self.submodels[sm_id].version
            del self.submodels[sm_id]
            self._wal_append("delete", "submodel", entity_id=sm_id)
        self._publish("submodel", sm_id, "deleted", version, None)

    def list_submodels(self, role: str = ROLE_INTERNAL, cursor: Optional[str] = None,
                       limit: int = DEFAULT_PAGE_LIMIT) -> Page:
        check_access(role, "GET")
        with self._lock:
            view = self._view("submodel", role)
            ids = sorted(view)
            if cursor:
                after = _decode_cursor(cursor)
                ids = [i for i in ids if i > after]
            chunk = ids[:limit]
            items = [view[i] for i in chunk]
        next_cursor = _encode_cursor(chunk[-1]) if len(chunk) == limit and len(ids) > limit else None
        return Page(items=items, next_cursor=next_cursor)

    def _resolve_for_write(self, sm_id: str) -> str:
        """Map a remote-referenced submodel id to its local copy-on-write copy."""
        if sm_id in self.submodels:
            return sm_id
        if self.cow_resolver is not None:
            local_id = self.cow_resolver(sm_id)
            if local_id is not None:
                return local_id
        raise NotFound(f"submodel {sm_id}")

    def patch_property_value(self, sm_id: str, id_short_path: str, new_value,
                             role: str = ROLE_INTERNAL) -> Submodel:
        check_access(role, "PATCH")
        sm_id = self._resolve_for_write(sm_id)
        with self._lock:
            sm = self.submodels.get(sm_id)
            if sm is None:
                raise NotFound(f"submodel {sm_id}")
            try:
                el = find_element(sm, id_short_path)
            except KeyError:
                raise PathNotFound(f"{sm_id}: no element at {id_short_path!r}") from None
            if not isinstance(el, Property):
                raise PathNotFound(f"{sm_id}: {id_short_path!r} is not a Property")
            value = parse_value(el.value_type, new_value)  # raises TypeMismatch
            patched = replace_element(sm, id_short_path, replace(el, value=value))
            updated = replace(patched, version=sm.version + 1)
            self.submodels[sm_id] = updated
            self._wal_append("put", "submodel", updated)
        self._publish("submodel", updated.id, "updated", updated.version, updated.to_dict())
        return updated

    def put_file_attachment(self, sm_id: str, id_short_path: str, data: bytes,
                            content_type: str, role: str = ROLE_INTERNAL) -> str:
        check_access(role, "PUT")
        sm_id = self._resolve_for_write(sm_id)
        with self._lock:
            sm = self.submodels.get(sm_id)
            if sm is None:
                raise NotFound(f"submodel {sm_id}")
            try:
                el = find_element(sm, id_short_path)
            except KeyError:
                raise PathNotFound(f"{sm_id}: no element at {id_short_path!r}") from None
            if not isinstance(el, FileAttachment):
                raise PathNotFound(f"{sm_id}: {id_short_path!r} is not a FileAttachment")
            digest = self.blobs.put(data)
            new_el = FileAttachment(id_short=el.id_short, content_type=content_type,
                                    digest=digest, length=len(data))
            patched = replace_element(sm, id_short_path, new_el)
            updated = replace(patched, version=sm.version + 1)
            self.submodels[sm_id] = updated
            self._wal_append("put", "submodel", updated)
        self._publish("submodel", updated.id, "updated", updated.version, updated.to_dict())
        return digest

    def get_file_attachment(self, sm_id: str, id_short_path: str,
                            role: str = ROLE_INTERNAL) -> tuple[bytes, str]:
        sm = self.get_submodel(sm_id, role)
        try:
            el = find_element(sm, id_short_path)
        except KeyError:
            raise PathNotFound(f"{sm_id}: no element at {id_short_path!r}") from None
        if not isinstance(el, FileAttachment):
            raise PathNotFound(f"{sm_id}: {id_short_path!r} is not a FileAttachment")
        return self.blobs.get(el.digest), el.content_type

    # --- snapshot support ---

    def all_entities(self) -> dict[str, object]:
        """Consistent view of every entity keyed as 'shell:<id>' / 'submodel:<id>'."""
        with self._lock:
            out: dict[str, object] = {}
            for s in self.shells.values():
                out[f"shell:{s.id}"] = s
            for m in self.submodels.values():
                out[f"submodel:{m.id}"] = m
            return out

    def restore_entities(self, shells: dict[str, Shell], submodels: dict[str, Submodel]):
        """Replace live state wholesale; caller (snapshot checkout) publishes diffs."""
        acquired = self._lock.acquire(blocking=False)
        if not acquired:
            from .errors import DirtyCheckout
            raise DirtyCheckout("mutations in flight")
        try:
            self.shells = dict(shells)
            self.submodels = dict(submodels)
            if self._wal_path:
                with open(self._wal_path, "w", encoding="utf-8") as fh:
                    for kind, store in (("shell", self.shells), ("submodel", self.submodels)):
                        for entity in store.values():
                            fh.write(json.dumps({"op": "put", "kind": kind,
                                                 "data": entity.to_dict()},
                                                sort_keys=True) + "\n")
        finally:
            self._lock.release()
