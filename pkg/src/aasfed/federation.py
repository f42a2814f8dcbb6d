"""Federation orchestrator: configuration, wiring of all per-organization
services onto one shared event bus, the workflow triggers, and the scripted
demo scenarios."""
from __future__ import annotations

import importlib.resources
import os
import threading
from dataclasses import dataclass, field
from typing import Optional
from urllib.parse import urlparse

import yaml

from .bpmn.engine import BpmnEngine, VirtualClock, WallClock
from .bpmn.parser import parse_bpmn
from .bus import Event, EventBus
from .clone import (CloneEngine, CloneRequest, FederationDirectory,
                    MODE_SHELL_ONLY)
from .errors import ConfigInvalid, UnknownProcess
from .httpapi import OrgContext, build_app
from .model import (Property, Shell, Submodel, encode_id_for_path,
                    shell_from_dict, submodel_from_dict)
from .registry import Registry, RegistryBridge, ShellDescriptor, SubmodelDescriptor
from .repository import ROLE_EXTERNAL, ROLE_INTERNAL, Organization, Repository
from .servicereq import (build_service_request_smc, find_service_requests,
                         provider_org_of, smc_status, status_of)
from .snapshots import SnapshotStore

BUNDLED_TEMPLATES = ("clone_approval.bpmn.xml", "service_request.bpmn.xml",
                     "service_request_provider.bpmn.xml")


@dataclass
class OrgConfig:
    org_id: str
    display_name: str
    internal_base_url: str
    external_base_url: str
    tokens: dict = field(default_factory=dict)    # token -> {user, role}
    users: dict = field(default_factory=dict)     # user -> [groups]
    templates: list = field(default_factory=list)  # (name, xml bytes)


@dataclass
class FederationConfig:
    organizations: list
    sync_interval_ms: int = 1000
    dead_letter_path: Optional[str] = None
    data_dir: Optional[str] = None
    ui_static_dir: Optional[str] = None


def _load_template_xml(name: str, base_dir: str) -> bytes:
    if name in BUNDLED_TEMPLATES:
        ref = importlib.resources.files("aasfed") / "templates" / name
        return ref.read_bytes()
    path = name if os.path.isabs(name) else os.path.join(base_dir, name)
    with open(path, "rb") as fh:
        return fh.read()


def load_config(path: str) -> FederationConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError as exc:
        raise ConfigInvalid(f"config file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ConfigInvalid(f"config is not valid YAML: {exc}") from exc
    return parse_config(raw or {}, base_dir=os.path.dirname(os.path.abspath(path)))


def parse_config(raw: dict, base_dir: str = ".") -> FederationConfig:
    orgs_raw = raw.get("organizations")
    if not isinstance(orgs_raw, list) or not orgs_raw:
        raise ConfigInvalid("organizations: must be a non-empty list")
    seen_ids = set()
    orgs = []
    for i, oc in enumerate(orgs_raw):
        prefix = f"organizations[{i}]"
        for req in ("orgId", "internalBaseUrl", "externalBaseUrl"):
            if not oc.get(req):
                raise ConfigInvalid(f"{prefix}.{req}")
        org_id = oc["orgId"]
        if org_id in seen_ids:
            raise ConfigInvalid(f"{prefix}.orgId")
        seen_ids.add(org_id)
        org = Organization(org_id=org_id, display_name=oc.get("displayName", org_id),
                           internal_base_url=oc["internalBaseUrl"],
                           external_base_url=oc["externalBaseUrl"])
        try:
            org.validate()
        except Exception as exc:
            raise ConfigInvalid(f"{prefix}.orgId: {exc}") from exc
        templates = []
        for j, name in enumerate(oc.get("templates", [])):
            try:
                xml = _load_template_xml(name, base_dir)
                parse_bpmn(xml.replace(b"__ORG__", org_id.encode()))
            except ConfigInvalid:
                raise
            except Exception as exc:
                raise ConfigInvalid(f"{prefix}.templates[{j}]: {exc}") from exc
            templates.append((name, xml))
        tokens = oc.get("tokens", {}) or {}
        for token, entry in tokens.items():
            if entry.get("role") not in (ROLE_INTERNAL, ROLE_EXTERNAL):
                raise ConfigInvalid(f"{prefix}.tokens[{token}].role")
        orgs.append(OrgConfig(org_id=org_id, display_name=org.display_name,
                              internal_base_url=org.internal_base_url,
                              external_base_url=org.external_base_url,
                              tokens=tokens, users=oc.get("users", {}) or {},
                              templates=templates))
    ui_static_dir = raw.get("ui", {}).get("staticDir")
    if ui_static_dir and not os.path.isabs(ui_static_dir):
        ui_static_dir = os.path.join(base_dir, ui_static_dir)
    if ui_static_dir and not os.path.isdir(ui_static_dir):
        raise ConfigInvalid(f"ui.staticDir: not a directory: {ui_static_dir}")
    return FederationConfig(
        organizations=orgs,
        sync_interval_ms=int(raw.get("bridge", {}).get("syncIntervalMs", 1000)),
        dead_letter_path=raw.get("bus", {}).get("deadLetterPath"),
        data_dir=raw.get("dataDir"),
        ui_static_dir=ui_static_dir)


@dataclass
class OrgRuntime:
    cfg: OrgConfig
    repo: Repository
    internal_registry: Registry
    external_registry: Registry
    snapshots: SnapshotStore
    engine: BpmnEngine
    clone_engine: CloneEngine = None
    bridge: RegistryBridge = None
    ctx: OrgContext = None
    internal_app: object = None
    external_app: object = None
    clone_dedup: set = field(default_factory=set)
    service_request_dedup: set = field(default_factory=set)


class Federation:
    """All services of every configured organization in one process, sharing
    one event bus. Tests drive it manually (pump/virtual clock); `fed up`
    runs it live with bridge threads, a timer ticker, and HTTP listeners."""

    def __init__(self, config: FederationConfig, clock=None,
                 id_factory=None, static_dir: Optional[str] = None,
                 bus_backoff_s: float = 0.001):
        self.config = config
        self.clock = clock or WallClock()
        self.bus = EventBus(dead_letter_path=config.dead_letter_path,
                            backoff_base_s=bus_backoff_s)
        self.directory = FederationDirectory()
        self.orgs: dict[str, OrgRuntime] = {}
        self._routes: dict[str, tuple] = {}  # base url -> (runtime, role)
        self._clients: dict[str, object] = {}
        self._ticker: Optional[threading.Thread] = None
        self._stop = threading.Event()

        for oc in config.organizations:
            data_dir = (os.path.join(config.data_dir, oc.org_id)
                        if config.data_dir else None)
            repo = Repository(oc.org_id, bus=self.bus, data_dir=data_dir)
            runtime = OrgRuntime(
                cfg=oc, repo=repo,
                internal_registry=Registry("internal", oc.org_id),
                external_registry=Registry("external", oc.org_id),
                snapshots=SnapshotStore(repo, os.path.join(data_dir, "snapshots")
                                        if data_dir else None),
                engine=BpmnEngine(clock=self.clock, http_caller=self._http_call,
                                  users=oc.users, id_factory=id_factory,
                                  data_dir=os.path.join(data_dir, "workflows")
                                  if data_dir else None))
            self.orgs[oc.org_id] = runtime
            self.directory.add_org(oc.org_id, repo)
            self.directory.external_registries.append(runtime.external_registry)

        for runtime in self.orgs.values():
            oc = runtime.cfg
            runtime.clone_engine = CloneEngine(oc.org_id, runtime.repo, self.directory)
            runtime.bridge = RegistryBridge(
                runtime.external_registry,
                sources=[rt.internal_registry for rt in self.orgs.values()],
                bus=self.bus, sync_interval_s=config.sync_interval_ms / 1000.0)
            runtime.engine.base_variables = {
                "orgId": oc.org_id, "targetOrg": oc.org_id,
                "repoBase": oc.internal_base_url,
                "eventsBase": oc.internal_base_url,
                "cloneEndpoint": f"{oc.internal_base_url}/clone",
                "approver": f"{oc.org_id}-workflow",
            }
            for name, xml in oc.templates:
                runtime.engine.deploy(xml.replace(b"__ORG__", oc.org_id.encode()))
            runtime.ctx = OrgContext(org_id=oc.org_id, repo=runtime.repo,
                                     internal_registry=runtime.internal_registry,
                                     external_registry=runtime.external_registry,
                                     clone_engine=runtime.clone_engine,
                                     snapshots=runtime.snapshots,
                                     engine=runtime.engine, bus=self.bus,
                                     tokens=oc.tokens,
                                     static_dir=static_dir or config.ui_static_dir)
            runtime.internal_app = build_app(runtime.ctx, ROLE_INTERNAL)
            runtime.external_app = build_app(runtime.ctx, ROLE_EXTERNAL)
            self._routes[oc.internal_base_url.rstrip("/")] = (runtime, ROLE_INTERNAL)
            self._routes[oc.external_base_url.rstrip("/")] = (runtime, ROLE_EXTERNAL)
            runtime.snapshots.on_promote.append(
                lambda commit, rt=runtime: self._announce_promoted(rt))
            self._subscribe_org(runtime)

    # --- in-process HTTP routing ---

    def _client_for(self, base: str):
        if base not in self._clients:
            from fastapi.testclient import TestClient
            runtime, role = self._routes[base]
            app = runtime.internal_app if role == ROLE_INTERNAL else runtime.external_app
            client = TestClient(app, raise_server_exceptions=False)
            token = next((t for t, e in runtime.cfg.tokens.items()
                          if e.get("role") == role), None)
            self._clients[base] = (client, token)
        return self._clients[base]

    def _http_call(self, method: str, url: str, body: str, headers: dict):
        base = next((b for b in self._routes if url.startswith(b + "/") or url == b), None)
        if base is None:
            raise ConnectionError(f"no listener for {url}")
        client, token = self._client_for(base)
        all_headers = dict(headers or {})
        all_headers["content-type"] = "application/json"
        if token:
            all_headers["authorization"] = f"Bearer {token}"
        resp = client.request(method, url[len(base):] or "/",
                              content=body.encode() if body else None,
                              headers=all_headers)
        return resp.status_code, resp.text

    def client(self, org_id: str, role: str = ROLE_INTERNAL):
        oc = self.orgs[org_id].cfg
        base = (oc.internal_base_url if role == ROLE_INTERNAL
                else oc.external_base_url).rstrip("/")
        return self._client_for(base)

    # --- event wiring ---

    def _subscribe_org(self, runtime: OrgRuntime):
        org = runtime.cfg.org_id
        self.bus.subscribe(f"aas-repo/{org}/shells/#",
                           lambda e, rt=runtime: self._maintain_shell_descriptors(rt, e))
        self.bus.subscribe(f"sm-repo/{org}/submodels/#",
                           lambda e, rt=runtime: self._maintain_submodel_descriptors(rt, e))
        self.bus.subscribe("aas-repo/+/shells/+/created",
                           lambda e, rt=runtime: self._clone_approval_trigger(rt, e))
        self.bus.subscribe(f"sm-repo/{org}/submodels/#",
                           lambda e, rt=runtime: self._service_request_trigger(rt, e))
        self.bus.subscribe(f"workflow/{org}/#",
                           lambda e, rt=runtime: rt.engine.deliver_message(e))

    def _maintain_shell_descriptors(self, runtime: OrgRuntime, event: Event):
        if event.org_id != runtime.cfg.org_id:
            return
        if event.action == "deleted":
            runtime.internal_registry.unregister_shell(event.entity_id)
        elif event.action in ("created", "updated") and event.body:
            runtime.internal_registry.register_shell(ShellDescriptor(
                shell_id=event.entity_id, asset_id=event.body["assetId"],
                org_id=runtime.cfg.org_id,
                endpoint=runtime.cfg.external_base_url,
                version=event.version or 1))

    def _maintain_submodel_descriptors(self, runtime: OrgRuntime, event: Event):
        if event.org_id != runtime.cfg.org_id:
            return
        if event.action == "deleted":
            runtime.internal_registry.unregister_submodel(event.entity_id)
        elif event.action in ("created", "updated"):
            runtime.internal_registry.register_submodel(SubmodelDescriptor(
                submodel_id=event.entity_id, org_id=runtime.cfg.org_id,
                endpoint=runtime.cfg.external_base_url,
                version=event.version or 1))

    def _announce_promoted(self, runtime: OrgRuntime):
        """The internal registry re-announces the versions that just went stable."""
        for shell in (runtime.repo._stable_shells or {}).values():
            runtime.internal_registry.register_shell(ShellDescriptor(
                shell_id=shell.id, asset_id=shell.asset_id,
                org_id=runtime.cfg.org_id,
                endpoint=runtime.cfg.external_base_url, version=shell.version))
        for sm in (runtime.repo._stable_submodels or {}).values():
            runtime.internal_registry.register_submodel(SubmodelDescriptor(
                submodel_id=sm.id, org_id=runtime.cfg.org_id,
                endpoint=runtime.cfg.external_base_url, version=sm.version))

    def _clone_approval_trigger(self, runtime: OrgRuntime, event: Event):
        """Start one clone-approval instance per foreign shell, idempotently."""
        if event.org_id == runtime.cfg.org_id or event.body is None:
            return
        key = (event.entity_id, event.version)
        if key in runtime.clone_dedup:
            return
        runtime.clone_dedup.add(key)
        try:
            runtime.engine.start_instance("clone-approval", {
                "aasId": event.entity_id,
                "assetId": event.body.get("assetId", ""),
                "sourceOrg": event.org_id,
                "sourceVersion": event.version or 1,
            })
        except UnknownProcess:
            runtime.clone_dedup.discard(key)

    def _service_request_trigger(self, runtime: OrgRuntime, event: Event):
        """Start the service-request workflow for every new draft SMC."""
        if event.org_id != runtime.cfg.org_id or event.body is None:
            return
        if event.action not in ("created", "updated"):
            return
        try:
            submodel = submodel_from_dict(event.body)
        except Exception:
            return
        for smc in find_service_requests(submodel):
            if status_of(smc) != "draft":
                continue
            key = (submodel.id, smc.id_short)
            if key in runtime.service_request_dedup:
                continue
            runtime.service_request_dedup.add(key)
            try:
                runtime.engine.start_instance("service-request", {
                    "submodelId": submodel.id,
                    "submodelIdEnc": encode_id_for_path(submodel.id),
                    "smcPath": smc.id_short,
                    "requesterOrg": runtime.cfg.org_id,
                    "providerOrg": provider_org_of(smc) or "",
                })
            except UnknownProcess:
                runtime.service_request_dedup.discard(key)

    # --- lifecycle ---

    def start_live(self):
        for runtime in self.orgs.values():
            runtime.bridge.start()
        self._stop.clear()
        self._ticker = threading.Thread(target=self._tick_loop, daemon=True,
                                        name="federation-ticker")
        self._ticker.start()

    def _tick_loop(self):
        while not self._stop.wait(0.05):
            for runtime in self.orgs.values():
                try:
                    runtime.engine.fire_timers()
                except Exception:
                    pass

    def stop(self):
        self._stop.set()
        for runtime in self.orgs.values():
            runtime.bridge.stop()
        if self._ticker is not None:
            self._ticker.join(timeout=2)
            self._ticker = None
        self.bus.close()

    def pump(self, cycles: int = 1):
        """Test/demo helper: run every bridge sync and fire due timers."""
        for _ in range(cycles):
            for runtime in self.orgs.values():
                runtime.bridge.sync_once()
                runtime.engine.fire_timers()

    def healthy(self) -> dict:
        out = {}
        for org_id in self.orgs:
            for role in (ROLE_INTERNAL, ROLE_EXTERNAL):
                client, _ = self.client(org_id, role)
                out[f"{org_id}/{role}"] = client.get("/healthz").status_code == 200
        return out

    # --- scripted scenarios ---

    def demo_copy_on_write(self) -> dict:
        """The two-organization copy-on-write scenario: clone a shell, modify a
        property (triggering a submodel copy), add a brand-new submodel, and
        return the consolidated asset view."""
        org_ids = list(self.orgs)
        if len(org_ids) < 2:
            raise ConfigInvalid("demo needs at least two organizations")
        source, target = self.orgs[org_ids[0]], self.orgs[org_ids[1]]
        asset_id = "urn:asset:demo-separator"
        submodel = Submodel(id=f"urn:{source.cfg.org_id}:sm:engineering",
                            id_short="EngineeringData", elements=(
                                Property(id_short="temperatureSetpoint",
                                         value_type="double", value=20.0),))
        source.repo.create_submodel(submodel)
        shell = Shell(id=f"urn:{source.cfg.org_id}:shell:separator",
                      asset_id=asset_id, id_short="Separator",
                      submodel_refs=(submodel.id,))
        source.repo.create_shell(shell)
        commit = source.snapshots.commit(tag="quality-gate-1", message="initial release")
        source.snapshots.promote_to_stable(commit.commit_id)

        clone = target.clone_engine.clone_shell(CloneRequest(
            source_org_id=source.cfg.org_id, source_shell_id=shell.id,
            source_version=shell.version, target_org_id=target.cfg.org_id,
            requested_by="demo", mode=MODE_SHELL_ONLY))
        # first write to the remote submodel triggers the copy
        target.repo.patch_property_value(submodel.id, "temperatureSetpoint", 21.5)
        new_submodel = Submodel(id=f"urn:{target.cfg.org_id}:sm:maintenance",
                                id_short="MaintenancePlan", elements=(
                                    Property(id_short="intervalDays",
                                             value_type="integer", value=90),))
        target.clone_engine.add_new_submodel(clone.id, new_submodel)
        target_commit = target.snapshots.commit(tag="after-changes")
        target.snapshots.promote_to_stable(target_commit.commit_id)
        self.pump(2)
        view = target.clone_engine.consolidated_view(asset_id)
        return {"assetId": asset_id, "cloneId": clone.id,
                "view": view.to_dict(),
                "sourceShellVersion": source.repo.get_shell(shell.id).version}

    def demo_service_request(self, confirm: bool = True, acknowledge: bool = True) -> dict:
        """The cross-organization service-request workflow, end to end."""
        org_ids = list(self.orgs)
        requester, provider = self.orgs[org_ids[0]], self.orgs[org_ids[1]]
        smc = build_service_request_smc(
            id_short="ServiceRequest001", requester_org=requester.cfg.org_id,
            provider_org=provider.cfg.org_id, contact="ops@requester.example",
            fault_description="Separator stage 2 pressure drift",
            requested_service_type="inspection")
        submodel = Submodel(id=f"urn:{requester.cfg.org_id}:sm:service",
                            id_short="ServiceRequests", elements=(smc,))
        statuses = ["draft"]
        requester.repo.create_submodel(submodel)  # trigger starts the workflow

        def current_status():
            return smc_status(requester.repo.get_submodel(submodel.id),
                              "ServiceRequest001")

        requester_user = next(iter(requester.cfg.users), None)
        tasks = requester.engine.list_open_tasks(candidate_group="process-engineers")
        if tasks:
            requester.engine.complete_user_task(
                tasks[0].task_id, requester_user,
                {"decision": "confirm" if confirm else "decline"})
            statuses.append(current_status())
        if confirm and acknowledge:
            provider_user = next((u for u, g in provider.cfg.users.items()
                                  if "service-desk" in g), None)
            provider_tasks = provider.engine.list_open_tasks(candidate_group="service-desk")
            if provider_tasks:
                provider.engine.complete_user_task(provider_tasks[0].task_id,
                                                   provider_user, {"received": True})
                statuses.append(current_status())
        instances = requester.engine.list_instances(process_key="service-request")
        return {"statuses": statuses,
                "instanceStates": [i.state for i in instances],
                "finalStatus": current_status()}

    # --- real servers (fed up) ---

    def serve(self):
        """Run every listener with uvicorn; blocks until stop() or Ctrl-C."""
        import uvicorn

        servers = []
        threads = []
        for base, (runtime, role) in self._routes.items():
            parsed = urlparse(base)
            if parsed.scheme != "http" or not parsed.port:
                raise ConfigInvalid(
                    f"cannot serve listener {base!r}: need http://host:port")
            app = (runtime.internal_app if role == ROLE_INTERNAL
                   else runtime.external_app)
            server = uvicorn.Server(uvicorn.Config(
                app, host=parsed.hostname, port=parsed.port, log_level="warning"))
            servers.append(server)
            thread = threading.Thread(target=server.run, daemon=True)
            threads.append(thread)
            thread.start()
        self.start_live()
        try:
            while all(t.is_alive() for t in threads):
                for t in threads:
                    t.join(timeout=0.5)
        except KeyboardInterrupt:
            pass
        finally:
            for server in servers:
                server.should_exit = True
            self.stop()
