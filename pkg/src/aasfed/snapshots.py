"""Content-addressed snapshot store: tagged commits of a repository's state,
diffs between commits, byte-exact checkout, and stable-set promotion."""
from __future__ import annotations

import hashlib
import json
import os
import threading
from dataclasses import dataclass, field
from typing import Optional

from .bus import utcnow_iso
from .errors import UnknownCommit
from .model import (FileAttachment, Collection, Shell, Submodel, canonical_json,
                    canonicalize, entity_from_dict)
from .repository import Repository


def _attachment_digests(elements) -> set[str]:
    out = set()
    for el in elements:
        if isinstance(el, FileAttachment):
            out.add(el.digest)
        elif isinstance(el, Collection):
            out |= _attachment_digests(el.children)
    return out


@dataclass(frozen=True)
class SnapshotCommit:
    commit_id: str  # hex sha-256 of the canonical commit body
    parent: Optional[str]
    tag: Optional[str]
    created_at: str
    entries: dict  # entity key ('shell:<id>' / 'submodel:<id>') -> content digest hex
    message: str

    def body(self) -> dict:
        return {"parent": self.parent, "tag": self.tag, "createdAt": self.created_at,
                "entries": self.entries, "message": self.message}

    def to_dict(self) -> dict:
        d = self.body()
        d["commitId"] = self.commit_id
        return d

    @staticmethod
    def from_dict(d: dict) -> "SnapshotCommit":
        return SnapshotCommit(commit_id=d["commitId"], parent=d.get("parent"),
                              tag=d.get("tag"), created_at=d["createdAt"],
                              entries=d["entries"], message=d.get("message", ""))


class SnapshotStore:
    """Per-repository commit history over canonical entity bytes.

    Objects (entity bytes and attachment blobs) are stored content-addressed,
    so a checkout restores the repository byte-exactly, attachments included.
    """

    def __init__(self, repo: Repository, directory: Optional[str] = None):
        self.repo = repo
        self.directory = directory
        self.objects: dict[str, bytes] = {}
        self.commits: dict[str, SnapshotCommit] = {}
        self.head: Optional[str] = None
        self.promoted_commit: Optional[str] = None
        self._lock = threading.RLock()
        self.on_promote: list = []  # callbacks fn(commit) run after each promotion
        if directory:
            os.makedirs(os.path.join(directory, "objects"), exist_ok=True)
            os.makedirs(os.path.join(directory, "commits"), exist_ok=True)
            self._load()

    def _load(self):
        obj_dir = os.path.join(self.directory, "objects")
        for name in os.listdir(obj_dir):
            with open(os.path.join(obj_dir, name), "rb") as fh:
                self.objects[name] = fh.read()
        commit_dir = os.path.join(self.directory, "commits")
        for name in os.listdir(commit_dir):
            with open(os.path.join(commit_dir, name), encoding="utf-8") as fh:
                commit = SnapshotCommit.from_dict(json.load(fh))
                self.commits[commit.commit_id] = commit

    def _store_object(self, digest: str, data: bytes):
        if digest in self.objects:
            return
        self.objects[digest] = data
        if self.directory:
            with open(os.path.join(self.directory, "objects", digest), "wb") as fh:
                fh.write(data)

    def _store_commit(self, commit: SnapshotCommit):
        self.commits[commit.commit_id] = commit
        if self.directory:
            path = os.path.join(self.directory, "commits", f"{commit.commit_id}.json")
            with open(path, "wb") as fh:
                fh.write(canonical_json(commit.to_dict()))

    def commit(self, tag: Optional[str] = None, message: str = "") -> SnapshotCommit:
        with self._lock:
            entities = self.repo.all_entities()
            entries: dict[str, str] = {}
            for key, entity in sorted(entities.items()):
                data = canonicalize(entity)
                digest = hashlib.sha256(data).hexdigest()
                entries[key] = digest
                self._store_object(digest, data)
                if isinstance(entity, Submodel):
                    for blob_digest in _attachment_digests(entity.elements):
                        if blob_digest in self.repo.blobs:
                            self._store_object(blob_digest, self.repo.blobs.get(blob_digest))
            body = {"parent": self.head, "tag": tag, "createdAt": utcnow_iso(),
                    "entries": entries, "message": message}
            commit_id = hashlib.sha256(canonical_json(body)).hexdigest()
            commit = SnapshotCommit(commit_id=commit_id, parent=self.head, tag=tag,
                                    created_at=body["createdAt"], entries=entries,
                                    message=message)
            self._store_commit(commit)
            self.head = commit_id
            return commit

    def get_commit(self, commit_id: str) -> SnapshotCommit:
        try:
            return self.commits[commit_id]
        except KeyError:
            raise UnknownCommit(commit_id) from None

    def diff(self, commit_a: str, commit_b: str) -> list[dict]:
        """Changes that turn commit_a's state into commit_b's state."""
        a = self.get_commit(commit_a).entries
        b = self.get_commit(commit_b).entries
        out = []
        for key in sorted(set(a) | set(b)):
            if key not in a:
                out.append({"entityId": key, "change": "added"})
            elif key not in b:
                out.append({"entityId": key, "change": "removed"})
            elif a[key] != b[key]:
                out.append({"entityId": key, "change": "modified"})
        return out

    def _materialize(self, commit: SnapshotCommit) -> tuple[dict[str, Shell], dict[str, Submodel]]:
        shells: dict[str, Shell] = {}
        submodels: dict[str, Submodel] = {}
        for key, digest in commit.entries.items():
            kind, _, entity_id = key.partition(":")
            data = self.objects.get(digest)
            if data is None:
                raise UnknownCommit(f"{commit.commit_id}: missing object {digest}")
            entity = entity_from_dict(kind, json.loads(data.decode("utf-8")))
            if kind == "shell":
                shells[entity_id] = entity
            else:
                submodels[entity_id] = entity
        return shells, submodels

    def checkout(self, commit_id: str):
        """Restore the live repository to the committed state byte-exactly and
        publish created/updated/deleted events for every entity that changed."""
        with self._lock:
            commit = self.get_commit(commit_id)
            shells, submodels = self._materialize(commit)
            before = self.repo.all_entities()
            after = {f"shell:{s.id}": s for s in shells.values()}
            after.update({f"submodel:{m.id}": m for m in submodels.values()})
            self.repo.restore_entities(shells, submodels)
            # re-seed attachment blobs that only exist in the object store
            for sm in submodels.values():
                for blob_digest in _attachment_digests(sm.elements):
                    if blob_digest not in self.repo.blobs and blob_digest in self.objects:
                        self.repo.blobs.put(self.objects[blob_digest])
            for key in sorted(set(before) | set(after)):
                kind, _, entity_id = key.partition(":")
                if key not in before:
                    e = after[key]
                    self.repo._publish(kind, entity_id, "created", e.version, e.to_dict())
                elif key not in after:
                    self.repo._publish(kind, entity_id, "deleted", before[key].version, None)
                elif canonicalize(before[key]) != canonicalize(after[key]):
                    e = after[key]
                    self.repo._publish(kind, entity_id, "updated", e.version, e.to_dict())

    def promote_to_stable(self, commit_id: str) -> SnapshotCommit:
        """Pin the external listener to the committed state; the internal
        listener keeps serving the live ('latest') state."""
        with self._lock:
            commit = self.get_commit(commit_id)
            shells, submodels = self._materialize(commit)
            self.repo.set_stable(shells, submodels)
            self.promoted_commit = commit_id
        for callback in self.on_promote:
            callback(commit)
        return commit
