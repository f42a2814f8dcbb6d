"""Snapshot store tests: content-addressed commits, diff, checkout, promote."""
import hashlib

import pytest

from aasfed.bus import EventBus
from aasfed.errors import UnknownCommit
from aasfed.model import (FileAttachment, Property, Shell, Submodel,
                          canonical_json, content_digest)
from aasfed.repository import ROLE_EXTERNAL, ROLE_INTERNAL, Repository
from aasfed.snapshots import SnapshotStore


def _seed(repo):
    sm = repo.create_submodel(Submodel(id="urn:sm:1", id_short="S", elements=(
        Property("setpoint", "double", 20.0),
        FileAttachment("manual", "application/pdf", "0" * 64, 0),
    )))
    shell = repo.create_shell(Shell(id="urn:shell:1", asset_id="urn:asset:1",
                                    id_short="A", submodel_refs=("urn:sm:1",)))
    return shell, sm


def _digests(repo):
    return {k: content_digest(v) for k, v in repo.all_entities().items()}


class TestCommitAndDiff:
    def test_commit_id_is_digest_of_body(self, repo):
        _seed(repo)
        store = SnapshotStore(repo)
        commit = store.commit(tag="v1", message="first")
        expected = hashlib.sha256(canonical_json(commit.body())).hexdigest()
        assert commit.commit_id == expected
        assert store.head == commit.commit_id

    def test_diff_of_commit_with_itself_is_empty(self, repo):
        _seed(repo)
        store = SnapshotStore(repo)
        c = store.commit()
        assert store.diff(c.commit_id, c.commit_id) == []

    def test_single_mutation_yields_single_modified(self, repo):
        _, sm = _seed(repo)
        store = SnapshotStore(repo)
        a = store.commit()
        repo.patch_property_value(sm.id, "setpoint", 21.5)
        b = store.commit()
        assert store.diff(a.commit_id, b.commit_id) == [
            {"entityId": f"submodel:{sm.id}", "change": "modified"}]

    def test_added_and_removed(self, repo):
        shell, _ = _seed(repo)
        store = SnapshotStore(repo)
        a = store.commit()
        repo.delete_shell(shell.id)
        repo.create_submodel(Submodel(id="urn:sm:2", id_short="T"))
        b = store.commit()
        assert store.diff(a.commit_id, b.commit_id) == [
            {"entityId": f"shell:{shell.id}", "change": "removed"},
            {"entityId": "submodel:urn:sm:2", "change": "added"}]

    def test_unchanged_state_reuses_entries(self, repo):
        _seed(repo)
        store = SnapshotStore(repo)
        a = store.commit()
        b = store.commit()
        assert a.entries == b.entries
        assert b.parent == a.commit_id

    def test_unknown_commit(self, repo):
        store = SnapshotStore(repo)
        with pytest.raises(UnknownCommit):
            store.diff("deadbeef", "deadbeef")
        with pytest.raises(UnknownCommit):
            store.checkout("deadbeef")


class TestCheckout:
    def test_byte_exact_roundtrip(self, repo):
        shell, sm = _seed(repo)
        repo.put_file_attachment(sm.id, "manual", b"manual-v1", "application/pdf")
        store = SnapshotStore(repo)
        snap = store.commit(tag="golden")
        before = _digests(repo)

        repo.patch_property_value(sm.id, "setpoint", 99.0)
        repo.delete_shell(shell.id)
        repo.create_shell(Shell(id="urn:shell:new", asset_id="urn:asset:2",
                                id_short="N"))
        assert _digests(repo) != before

        store.checkout(snap.commit_id)
        assert _digests(repo) == before
        data, _ = repo.get_file_attachment(sm.id, "manual")
        assert data == b"manual-v1"

    def test_checkout_publishes_diff_events_only(self, bus, repo):
        shell, sm = _seed(repo)
        store = SnapshotStore(repo)
        snap = store.commit()
        repo.patch_property_value(sm.id, "setpoint", 50.0)  # sm changes
        repo.create_shell(Shell(id="urn:shell:extra", asset_id="urn:asset:9",
                                id_short="X"))              # will be deleted
        events = []
        bus.subscribe("#", events.append)
        store.checkout(snap.commit_id)
        got = sorted((e.entity_id, e.action) for e in events)
        assert got == sorted([(sm.id, "updated"), ("urn:shell:extra", "deleted")])

    def test_persistence_across_store_instances(self, tmp_path):
        repo = Repository("org-o", data_dir=str(tmp_path / "repo"))
        _seed(repo)
        store = SnapshotStore(repo, directory=str(tmp_path / "snaps"))
        snap = store.commit(tag="v1")
        before = _digests(repo)
        repo.patch_property_value("urn:sm:1", "setpoint", 1.0)

        store2 = SnapshotStore(repo, directory=str(tmp_path / "snaps"))
        assert snap.commit_id in store2.commits
        store2.checkout(snap.commit_id)
        assert _digests(repo) == before


class TestPromote:
    def test_external_serves_promoted_internal_serves_live(self, repo):
        shell, sm = _seed(repo)
        store = SnapshotStore(repo)
        assert repo.promoted is False
        snap = store.commit(tag="stable")
        store.promote_to_stable(snap.commit_id)
        assert repo.promoted is True
        assert store.promoted_commit == snap.commit_id

        repo.patch_property_value(sm.id, "setpoint", 33.3)
        external = repo.get_submodel(sm.id, role=ROLE_EXTERNAL)
        internal = repo.get_submodel(sm.id, role=ROLE_INTERNAL)
        assert external.version == 1 and internal.version == 2
        assert [p.value for p in external.elements if p.id_short == "setpoint"] == [20.0]

    def test_promote_callbacks_fire(self, repo):
        _seed(repo)
        store = SnapshotStore(repo)
        seen = []
        store.on_promote.append(lambda c: seen.append(c.commit_id))
        snap = store.commit()
        store.promote_to_stable(snap.commit_id)
        assert seen == [snap.commit_id]

    def test_promote_older_commit_rolls_external_back(self, repo):
        _, sm = _seed(repo)
        store = SnapshotStore(repo)
        old = store.commit()
        repo.patch_property_value(sm.id, "setpoint", 40.0)
        new = store.commit()
        store.promote_to_stable(new.commit_id)
        store.promote_to_stable(old.commit_id)
        assert repo.get_submodel(sm.id, role=ROLE_EXTERNAL).version == 1
