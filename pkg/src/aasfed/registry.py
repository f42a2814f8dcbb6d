"""Shell/submodel descriptor registries, asset-ID discovery, and the bridge
that keeps an organization's external registry equal to the union of all
internal registries."""
from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

from .bus import EventBus, utcnow_iso
from .errors import SourceUnreachable, WrongOrganization

KIND_INTERNAL = "internal"
KIND_EXTERNAL = "external"

DEBOUNCE_S = 0.5


@dataclass(frozen=True)
class ShellDescriptor:
    shell_id: str
    asset_id: str
    org_id: str
    endpoint: str  # external listener base URL of the hosting repository
    version: int
    last_synced_at: str = ""

    @property
    def key(self) -> str:
        return self.shell_id

    def core(self) -> tuple:
        # identity for change detection: everything except the sync timestamp
        return (self.shell_id, self.asset_id, self.org_id, self.endpoint, self.version)

    def to_dict(self) -> dict:
        return {"shellId": self.shell_id, "assetId": self.asset_id,
                "orgId": self.org_id, "endpoint": self.endpoint,
                "version": self.version, "lastSyncedAt": self.last_synced_at}

    @staticmethod
    def from_dict(d: dict) -> "ShellDescriptor":
        return ShellDescriptor(shell_id=d["shellId"], asset_id=d["assetId"],
                               org_id=d["orgId"], endpoint=d["endpoint"],
                               version=d["version"],
                               last_synced_at=d.get("lastSyncedAt", ""))


@dataclass(frozen=True)
class SubmodelDescriptor:
    submodel_id: str
    org_id: str
    endpoint: str
    version: int
    last_synced_at: str = ""

    @property
    def key(self) -> str:
        return self.submodel_id

    def core(self) -> tuple:
        return (self.submodel_id, self.org_id, self.endpoint, self.version)

    def to_dict(self) -> dict:
        return {"submodelId": self.submodel_id, "orgId": self.org_id,
                "endpoint": self.endpoint, "version": self.version,
                "lastSyncedAt": self.last_synced_at}

    @staticmethod
    def from_dict(d: dict) -> "SubmodelDescriptor":
        return SubmodelDescriptor(submodel_id=d["submodelId"], org_id=d["orgId"],
                                  endpoint=d["endpoint"], version=d["version"],
                                  last_synced_at=d.get("lastSyncedAt", ""))


class Registry:
    """Descriptor lookup store. An internal registry only accepts descriptors
    of its own organization; an external registry accepts all."""

    def __init__(self, kind: str, org_id: str):
        assert kind in (KIND_INTERNAL, KIND_EXTERNAL)
        self.kind = kind
        self.org_id = org_id
        self._shells: dict[str, ShellDescriptor] = {}
        self._submodels: dict[str, SubmodelDescriptor] = {}
        self._lock = threading.RLock()

    def _check_org(self, desc):
        if self.kind == KIND_INTERNAL and desc.org_id != self.org_id:
            raise WrongOrganization(
                f"internal registry of {self.org_id!r} rejects descriptor of {desc.org_id!r}")

    def register_shell(self, desc: ShellDescriptor) -> ShellDescriptor:
        self._check_org(desc)
        with self._lock:
            self._shells[desc.key] = desc
        return desc

    def unregister_shell(self, shell_id: str):
        with self._lock:
            self._shells.pop(shell_id, None)

    def list_shell_descriptors(self) -> list[ShellDescriptor]:
        with self._lock:
            return sorted(self._shells.values(), key=lambda d: (d.org_id, d.shell_id))

    def register_submodel(self, desc: SubmodelDescriptor) -> SubmodelDescriptor:
        self._check_org(desc)
        with self._lock:
            self._submodels[desc.key] = desc
        return desc

    def unregister_submodel(self, submodel_id: str):
        with self._lock:
            self._submodels.pop(submodel_id, None)

    def list_submodel_descriptors(self) -> list[SubmodelDescriptor]:
        with self._lock:
            return sorted(self._submodels.values(), key=lambda d: (d.org_id, d.submodel_id))


@dataclass
class DiscoveryResult:
    descriptors: list[ShellDescriptor]
    partial: bool = False
    warnings: list[str] = field(default_factory=list)


def discover_by_asset_id(asset_id: str, registries: Sequence) -> DiscoveryResult:
    """Resolve an asset id to every shell descriptor across the given
    (external) registries; unreachable registries yield a partial result."""
    found: dict[str, ShellDescriptor] = {}
    partial = False
    warnings: list[str] = []
    for reg in registries:
        try:
            descs = reg.list_shell_descriptors()
        except SourceUnreachable as exc:
            partial = True
            warnings.append(str(exc))
            continue
        for d in descs:
            if d.asset_id == asset_id and d.shell_id not in found:
                found[d.shell_id] = d
    ordered = sorted(found.values(), key=lambda d: (d.org_id, d.shell_id))
    return DiscoveryResult(descriptors=ordered, partial=partial, warnings=warnings)


@dataclass
class SyncReport:
    added: int = 0
    updated: int = 0
    removed: int = 0
    errors: int = 0

    def total_changes(self) -> int:
        return self.added + self.updated + self.removed


class RegistryBridge:
    """Synchronizes one external registry from a set of internal-registry
    sources, interval-triggered and event-triggered."""

    def __init__(self, external: Registry, sources: Sequence,
                 bus: Optional[EventBus] = None,
                 sync_interval_s: float = 5.0,
                 debounce_s: float = DEBOUNCE_S):
        self.external = external
        self.sources = list(sources)
        self.bus = bus
        self.sync_interval_s = sync_interval_s
        self.debounce_s = debounce_s
        self._wake = threading.Event()
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None
        self._run_lock = threading.Lock()  # never two overlapping syncs
        self._subscription = None

    def sync_once(self) -> SyncReport:
        with self._run_lock:
            return self._sync_locked()

    def _sync_locked(self) -> SyncReport:
        report = SyncReport()
        now = utcnow_iso()
        reachable_orgs: set[str] = set()
        union_shells: dict[str, ShellDescriptor] = {}
        union_submodels: dict[str, SubmodelDescriptor] = {}
        for source in self.sources:
            try:
                shells = source.list_shell_descriptors()
                submodels = source.list_submodel_descriptors()
            except SourceUnreachable:
                report.errors += 1
                continue
            reachable_orgs.add(source.org_id)
            for d in shells:
                union_shells[d.key] = d
            for d in submodels:
                union_submodels[d.key] = d

        existing = {d.key: d for d in self.external.list_shell_descriptors()}
        for key, desc in union_shells.items():
            old = existing.get(key)
            if old is None:
                self.external.register_shell(replace(desc, last_synced_at=now))
                report.added += 1
            elif old.core() != desc.core():
                self.external.register_shell(replace(desc, last_synced_at=now))
                report.updated += 1
        for key, old in existing.items():
            # descriptors of unreachable orgs are retained until confirmed absent
            if key not in union_shells and old.org_id in reachable_orgs:
                self.external.unregister_shell(key)
                report.removed += 1

        existing_sm = {d.key: d for d in self.external.list_submodel_descriptors()}
        for key, desc in union_submodels.items():
            old = existing_sm.get(key)
            if old is None:
                self.external.register_submodel(replace(desc, last_synced_at=now))
                report.added += 1
            elif old.core() != desc.core():
                self.external.register_submodel(replace(desc, last_synced_at=now))
                report.updated += 1
        for key, old in existing_sm.items():
            if key not in union_submodels and old.org_id in reachable_orgs:
                self.external.unregister_submodel(key)
                report.removed += 1
        return report

    # --- long-running operation ---

    def start(self):
        if self._thread is not None:
            return
        if self.bus is not None:
            self._subscription = self.bus.subscribe("aas-repo/#", self._on_event)
        self._stop.clear()
        self._thread = threading.Thread(target=self._loop, daemon=True,
                                        name=f"bridge-{self.external.org_id}")
        self._thread.start()

    def _on_event(self, event):
        if event.action in ("created", "updated", "deleted"):
            self._wake.set()

    def _loop(self):
        last_run = 0.0
        while not self._stop.is_set():
            woke = self._wake.wait(timeout=self.sync_interval_s)
            if self._stop.is_set():
                return
            if woke:
                self._wake.clear()
                since = time.monotonic() - last_run
                if since < self.debounce_s:
                    time.sleep(self.debounce_s - since)
            try:
                self.sync_once()
            except Exception:  # sync problems are logged by callers, never fatal
                pass
            last_run = time.monotonic()

    def stop(self):
        self._stop.set()
        self._wake.set()
        if self._subscription is not None:
            self._subscription.unsubscribe()
            self._subscription = None
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None
