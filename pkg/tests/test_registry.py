"""Registry, discovery, and bridge synchronization tests."""
import random
import time

import pytest

from aasfed.bus import Event, EventBus
from aasfed.errors import SourceUnreachable, WrongOrganization
from aasfed.registry import (DiscoveryResult, Registry, RegistryBridge,
                             ShellDescriptor, SubmodelDescriptor,
                             discover_by_asset_id)


def _desc(shell_id, asset_id="urn:asset:x", org="org-a", version=1):
    return ShellDescriptor(shell_id=shell_id, asset_id=asset_id, org_id=org,
                           endpoint=f"http://{org}.example/ext", version=version)


def _sm_desc(sm_id, org="org-a", version=1):
    return SubmodelDescriptor(submodel_id=sm_id, org_id=org,
                              endpoint=f"http://{org}.example/ext", version=version)


class FlakyRegistry(Registry):
    """Registry stand-in that can be switched unreachable."""

    def __init__(self, org_id, kind="internal"):
        super().__init__(kind, org_id)
        self.reachable = True

    def list_shell_descriptors(self):
        if not self.reachable:
            raise SourceUnreachable(f"{self.org_id} down")
        return super().list_shell_descriptors()

    def list_submodel_descriptors(self):
        if not self.reachable:
            raise SourceUnreachable(f"{self.org_id} down")
        return super().list_submodel_descriptors()


class TestRegistry:
    def test_register_is_upsert(self):
        reg = Registry("internal", "org-a")
        reg.register_shell(_desc("urn:s1"))
        reg.register_shell(_desc("urn:s1", version=2))
        descs = reg.list_shell_descriptors()
        assert len(descs) == 1 and descs[0].version == 2

    def test_internal_rejects_foreign_descriptor(self):
        reg = Registry("internal", "org-a")
        with pytest.raises(WrongOrganization):
            reg.register_shell(_desc("urn:s1", org="org-b"))
        with pytest.raises(WrongOrganization):
            reg.register_submodel(_sm_desc("urn:m1", org="org-b"))

    def test_external_accepts_any_org(self):
        reg = Registry("external", "org-a")
        reg.register_shell(_desc("urn:s1", org="org-b"))
        assert len(reg.list_shell_descriptors()) == 1

    def test_unregister_is_idempotent(self):
        reg = Registry("internal", "org-a")
        reg.register_shell(_desc("urn:s1"))
        reg.unregister_shell("urn:s1")
        reg.unregister_shell("urn:s1")
        assert reg.list_shell_descriptors() == []

    def test_descriptor_dict_roundtrip(self):
        d = _desc("urn:s1", version=3)
        assert ShellDescriptor.from_dict(d.to_dict()) == d
        m = _sm_desc("urn:m1")
        assert SubmodelDescriptor.from_dict(m.to_dict()) == m


class TestDiscovery:
    def test_finds_across_registries_ordered(self):
        ra = Registry("external", "org-a")
        rb = Registry("external", "org-b")
        ra.register_shell(_desc("urn:s2", org="org-b"))
        ra.register_shell(_desc("urn:s1", org="org-a"))
        rb.register_shell(_desc("urn:s2", org="org-b"))  # duplicate across registries
        ra.register_shell(_desc("urn:other", asset_id="urn:asset:y", org="org-a"))
        res = discover_by_asset_id("urn:asset:x", [ra, rb])
        assert [(d.org_id, d.shell_id) for d in res.descriptors] == \
            [("org-a", "urn:s1"), ("org-b", "urn:s2")]
        assert res.partial is False

    def test_partial_on_unreachable(self):
        ok = Registry("external", "org-a")
        ok.register_shell(_desc("urn:s1", org="org-a"))
        down = FlakyRegistry("org-b", kind="external")
        down.reachable = False
        res = discover_by_asset_id("urn:asset:x", [ok, down])
        assert res.partial is True
        assert len(res.descriptors) == 1
        assert res.warnings


def brute_force_union(sources):
    """Oracle for the bridge: the union of all reachable internal registries."""
    shells, submodels, reachable = {}, {}, set()
    for s in sources:
        try:
            for d in s.list_shell_descriptors():
                shells[d.shell_id] = d.core()
            for d in s.list_submodel_descriptors():
                submodels[d.submodel_id] = d.core()
            reachable.add(s.org_id)
        except SourceUnreachable:
            pass
    return shells, submodels, reachable


def external_cores(external):
    return ({d.shell_id: d.core() for d in external.list_shell_descriptors()},
            {d.submodel_id: d.core() for d in external.list_submodel_descriptors()})


class TestBridgeSync:
    def _setup(self, n_orgs=2):
        sources = [FlakyRegistry(f"org-{i}") for i in range(n_orgs)]
        external = Registry("external", "org-0")
        bridge = RegistryBridge(external, sources)
        return sources, external, bridge

    def test_sync_builds_union(self):
        sources, external, bridge = self._setup()
        sources[0].register_shell(_desc("urn:s1", org="org-0"))
        sources[1].register_shell(_desc("urn:s2", org="org-1"))
        sources[1].register_submodel(_sm_desc("urn:m1", org="org-1"))
        report = bridge.sync_once()
        assert (report.added, report.updated, report.removed) == (3, 0, 0)
        shells, submodels = external_cores(external)
        want_shells, want_sms, _ = brute_force_union(sources)
        assert (shells, submodels) == (want_shells, want_sms)

    def test_second_sync_is_noop(self):
        sources, external, bridge = self._setup()
        sources[0].register_shell(_desc("urn:s1", org="org-0"))
        bridge.sync_once()
        report = bridge.sync_once()
        assert report.total_changes() == 0

    def test_removal_via_full_set_comparison(self):
        sources, external, bridge = self._setup()
        sources[0].register_shell(_desc("urn:s1", org="org-0"))
        bridge.sync_once()
        sources[0].unregister_shell("urn:s1")
        report = bridge.sync_once()
        assert report.removed == 1
        assert external.list_shell_descriptors() == []

    def test_unreachable_org_descriptors_retained(self):
        sources, external, bridge = self._setup()
        sources[1].register_shell(_desc("urn:s2", org="org-1"))
        bridge.sync_once()
        sources[1].reachable = False
        report = bridge.sync_once()
        assert report.errors == 1
        assert report.removed == 0
        assert [d.shell_id for d in external.list_shell_descriptors()] == ["urn:s2"]
        # once reachable again and empty, the descriptor is removed
        sources[1].reachable = True
        sources[1].unregister_shell("urn:s2")
        assert bridge.sync_once().removed == 1

    def test_version_change_counts_as_update(self):
        sources, external, bridge = self._setup()
        sources[0].register_shell(_desc("urn:s1", org="org-0"))
        bridge.sync_once()
        sources[0].register_shell(_desc("urn:s1", org="org-0", version=2))
        report = bridge.sync_once()
        assert (report.added, report.updated, report.removed) == (0, 1, 0)
        assert external.list_shell_descriptors()[0].version == 2

    def test_randomized_convergence_within_two_syncs(self):
        rng = random.Random(7)
        for trial in range(30):
            n = rng.randint(1, 5)
            sources, external, bridge = self._setup(n)
            # random initial population plus random churn
            for step in range(rng.randint(1, 20)):
                src = rng.choice(sources)
                sid = f"urn:s{rng.randint(0, 9)}"
                if rng.random() < 0.7:
                    src.register_shell(_desc(sid, org=src.org_id,
                                             version=rng.randint(1, 3)))
                else:
                    src.unregister_shell(sid)
                if rng.random() < 0.3:
                    src.register_submodel(_sm_desc(f"urn:m{rng.randint(0, 5)}",
                                                   org=src.org_id))
                if rng.random() < 0.2:
                    bridge.sync_once()
            bridge.sync_once()
            assert bridge.sync_once().total_changes() == 0, f"trial {trial}"
            shells, submodels = external_cores(external)
            want_shells, want_sms, _ = brute_force_union(sources)
            assert (shells, submodels) == (want_shells, want_sms), f"trial {trial}"


class TestBridgeRun:
    def test_event_triggered_sync(self):
        bus = EventBus(backoff_base_s=0.0)
        sources = [FlakyRegistry("org-0")]
        external = Registry("external", "org-0")
        bridge = RegistryBridge(external, sources, bus=bus,
                                sync_interval_s=30.0, debounce_s=0.01)
        bridge.start()
        try:
            sources[0].register_shell(_desc("urn:s1", org="org-0"))
            bus.publish(Event(topic="aas-repo/org-0/shells/enc/created",
                              org_id="org-0", entity_kind="shell",
                              entity_id="urn:s1", action="created", version=1))
            deadline = time.monotonic() + 3.0
            while time.monotonic() < deadline:
                if external.list_shell_descriptors():
                    break
                time.sleep(0.01)
            assert [d.shell_id for d in external.list_shell_descriptors()] == ["urn:s1"]
        finally:
            bridge.stop()
        assert bridge._thread is None

    def test_interval_sync_without_events(self):
        sources = [FlakyRegistry("org-0")]
        external = Registry("external", "org-0")
        bridge = RegistryBridge(external, sources, sync_interval_s=0.05)
        sources[0].register_shell(_desc("urn:s1", org="org-0"))
        bridge.start()
        try:
            deadline = time.monotonic() + 3.0
            while time.monotonic() < deadline:
                if external.list_shell_descriptors():
                    break
                time.sleep(0.01)
            assert external.list_shell_descriptors()
        finally:
            bridge.stop()
