"""REST surface of one organization: an internal (read-write) listener and an
external (read-only, stable-set) listener built from the same route table.

The listener a request arrives on determines the role; bearer tokens from the
static federation config authenticate the caller and carry the user identity
used for task completion.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

from fastapi import FastAPI, Request, Response

from . import errors as err
from .bus import Event, EventBus
from .clone import CloneEngine, CloneRequest
from .bpmn.engine import BpmnEngine
from .model import (canonical_json, decode_id_from_path, shell_from_dict,
                    submodel_from_dict)
from .registry import Registry, ShellDescriptor, discover_by_asset_id
from .repository import ROLE_EXTERNAL, ROLE_INTERNAL, Repository, check_access
from .snapshots import SnapshotStore

STATUS_BY_ERROR = [
    (err.Forbidden, 403),
    ((err.NotFound, err.UnknownProcess, err.UnknownCommit), 404),
    ((err.VersionConflict, err.AlreadyExists, err.TaskNotOpen, err.DirtyCheckout,
      err.NotARemoteReference, err.VersionGone), 409),
    ((err.TypeMismatch, err.PathNotFound, err.FormValidation, err.SelfClone,
      err.UnsupportedElement, err.GraphInvalid, err.XmlMalformed,
      err.BadExpression, err.InvalidEntity), 422),
    (err.SourceUnreachable, 502),
    ((err.MalformedEncoding, err.MalformedPattern, err.WrongOrganization), 400),
]


def status_for(exc: Exception) -> int:
    for types, code in STATUS_BY_ERROR:
        if isinstance(exc, types):
            return code
    return 400


@dataclass
class OrgContext:
    """Everything one organization's listeners need."""
    org_id: str
    repo: Repository
    internal_registry: Registry
    external_registry: Registry
    clone_engine: CloneEngine
    snapshots: SnapshotStore
    engine: BpmnEngine
    bus: EventBus
    # token -> {"role": ..., "user": ...}; empty table means anonymous access
    tokens: dict = field(default_factory=dict)
    static_dir: Optional[str] = None


def _canonical_response(payload, status_code: int = 200) -> Response:
    return Response(content=canonical_json(payload), status_code=status_code,
                    media_type="application/json")


def _json_error(exc: Exception) -> Response:
    payload = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, err.FormValidation):
        payload["fieldErrors"] = exc.field_errors
    return _canonical_response(payload, status_for(exc))


def build_app(ctx: OrgContext, role: str) -> FastAPI:
    app = FastAPI(title=f"{ctx.org_id} ({role})")

    @app.exception_handler(err.FederationError)
    async def _handle(request: Request, exc: err.FederationError):
        return _json_error(exc)

    @app.middleware("http")
    async def _auth(request: Request, call_next):
        if ctx.tokens:
            auth = request.headers.get("authorization", "")
            token = auth.removeprefix("Bearer ").strip()
            entry = ctx.tokens.get(token)
            if entry is None:
                return _canonical_response(
                    {"error": "Forbidden", "message": "missing or unknown token"}, 403)
            request.state.user = entry.get("user", "")
        else:
            request.state.user = ""
        return await call_next(request)

    def guard(verb: str):
        # the verb/role filter IS the copy-on-write guard on the external listener
        check_access(role, verb)

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "orgId": ctx.org_id, "role": role}

    # --- shells ---

    @app.get("/shells")
    def list_shells(cursor: Optional[str] = None, limit: int = 100):
        page = ctx.repo.list_shells(role=role, cursor=cursor, limit=limit)
        return _canonical_response({"items": [s.to_dict() for s in page.items],
                                    "nextCursor": page.next_cursor})

    @app.post("/shells")
    async def create_shell(request: Request):
        guard("POST")
        shell = shell_from_dict(await request.json())
        return _canonical_response(ctx.repo.create_shell(shell, role=role).to_dict(), 201)

    @app.get("/shells/{encoded_id}")
    def get_shell(encoded_id: str):
        shell_id = decode_id_from_path(encoded_id)
        return _canonical_response(ctx.repo.get_shell(shell_id, role=role).to_dict())

    @app.put("/shells/{encoded_id}")
    async def update_shell(encoded_id: str, request: Request):
        guard("PUT")
        shell = shell_from_dict(await request.json())
        if shell.id != decode_id_from_path(encoded_id):
            raise err.InvalidEntity("body id does not match path id")
        return _canonical_response(ctx.repo.update_shell(shell, role=role).to_dict())

    @app.delete("/shells/{encoded_id}")
    def delete_shell(encoded_id: str):
        guard("DELETE")
        ctx.repo.delete_shell(decode_id_from_path(encoded_id), role=role)
        return _canonical_response({"deleted": True})

    # --- submodels ---

    @app.get("/submodels")
    def list_submodels(cursor: Optional[str] = None, limit: int = 100):
        page = ctx.repo.list_submodels(role=role, cursor=cursor, limit=limit)
        return _canonical_response({"items": [s.to_dict() for s in page.items],
                                    "nextCursor": page.next_cursor})

    @app.post("/submodels")
    async def create_submodel(request: Request):
        guard("POST")
        sm = submodel_from_dict(await request.json())
        return _canonical_response(ctx.repo.create_submodel(sm, role=role).to_dict(), 201)

    @app.get("/submodels/{encoded_id}")
    def get_submodel(encoded_id: str):
        sm_id = decode_id_from_path(encoded_id)
        return _canonical_response(ctx.repo.get_submodel(sm_id, role=role).to_dict())

    @app.put("/submodels/{encoded_id}")
    async def update_submodel(encoded_id: str, request: Request):
        guard("PUT")
        sm = submodel_from_dict(await request.json())
        if sm.id != decode_id_from_path(encoded_id):
            raise err.InvalidEntity("body id does not match path id")
        return _canonical_response(ctx.repo.update_submodel(sm, role=role).to_dict())

    @app.delete("/submodels/{encoded_id}")
    def delete_submodel(encoded_id: str):
        guard("DELETE")
        ctx.repo.delete_submodel(decode_id_from_path(encoded_id), role=role)
        return _canonical_response({"deleted": True})

    @app.patch("/submodels/{encoded_id}/elements/{id_short_path}/value")
    async def patch_value(encoded_id: str, id_short_path: str, request: Request):
        guard("PATCH")
        raw = await request.body()
        try:
            value = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise err.TypeMismatch(f"body is not JSON: {exc}") from exc
        if isinstance(value, dict) and "value" in value:
            value = value["value"]
        sm = ctx.repo.patch_property_value(decode_id_from_path(encoded_id),
                                           id_short_path, value, role=role)
        return _canonical_response(sm.to_dict())

    @app.put("/submodels/{encoded_id}/elements/{id_short_path}/attachment")
    async def put_attachment(encoded_id: str, id_short_path: str, request: Request):
        guard("PUT")
        data = await request.body()
        content_type = request.headers.get("content-type", "application/octet-stream")
        digest = ctx.repo.put_file_attachment(decode_id_from_path(encoded_id),
                                              id_short_path, data, content_type,
                                              role=role)
        return _canonical_response({"digest": digest, "length": len(data)})

    @app.get("/submodels/{encoded_id}/elements/{id_short_path}/attachment")
    def get_attachment(encoded_id: str, id_short_path: str):
        data, content_type = ctx.repo.get_file_attachment(
            decode_id_from_path(encoded_id), id_short_path, role=role)
        return Response(content=data, media_type=content_type)

    # --- registry / discovery ---

    registry = ctx.internal_registry if role == ROLE_INTERNAL else ctx.external_registry

    @app.get("/registry/shell-descriptors")
    def list_descriptors():
        return _canonical_response(
            {"items": [d.to_dict() for d in registry.list_shell_descriptors()]})

    @app.post("/registry/shell-descriptors")
    async def register_descriptor(request: Request):
        guard("POST")
        desc = ShellDescriptor.from_dict(await request.json())
        return _canonical_response(registry.register_shell(desc).to_dict(), 201)

    @app.delete("/registry/shell-descriptors/{encoded_id}")
    def unregister_descriptor(encoded_id: str):
        guard("DELETE")
        registry.unregister_shell(decode_id_from_path(encoded_id))
        return _canonical_response({"deleted": True})

    @app.get("/registry/submodel-descriptors")
    def list_submodel_descriptors():
        return _canonical_response(
            {"items": [d.to_dict() for d in registry.list_submodel_descriptors()]})

    @app.get("/discovery/assets/{encoded_asset_id}/shells")
    def discover(encoded_asset_id: str):
        asset_id = decode_id_from_path(encoded_asset_id)
        result = discover_by_asset_id(
            asset_id, ctx.clone_engine.directory.external_registries)
        return _canonical_response({"items": [d.to_dict() for d in result.descriptors],
                                    "partial": result.partial,
                                    "warnings": result.warnings})

    # --- clone engine / snapshots ---

    @app.post("/clone")
    async def clone(request: Request):
        guard("POST")
        req = CloneRequest.from_dict(await request.json())
        return _canonical_response(ctx.clone_engine.clone_shell(req).to_dict(), 201)

    @app.get("/assets/{encoded_asset_id}/consolidated")
    def consolidated(encoded_asset_id: str):
        asset_id = decode_id_from_path(encoded_asset_id)
        return _canonical_response(ctx.clone_engine.consolidated_view(asset_id).to_dict())

    @app.post("/snapshots")
    async def snapshot_commit(request: Request):
        guard("POST")
        body = await request.json() if await request.body() else {}
        commit = ctx.snapshots.commit(tag=body.get("tag"),
                                      message=body.get("message", ""))
        return _canonical_response(commit.to_dict(), 201)

    @app.get("/snapshots/{commit_a}/diff/{commit_b}")
    def snapshot_diff(commit_a: str, commit_b: str):
        return _canonical_response({"changes": ctx.snapshots.diff(commit_a, commit_b)})

    @app.post("/snapshots/{commit_id}/checkout")
    def snapshot_checkout(commit_id: str):
        guard("POST")
        ctx.snapshots.checkout(commit_id)
        return _canonical_response({"checkedOut": commit_id})

    @app.post("/snapshots/{commit_id}/promote")
    def snapshot_promote(commit_id: str):
        guard("POST")
        commit = ctx.snapshots.promote_to_stable(commit_id)
        return _canonical_response({"promoted": commit.commit_id, "tag": commit.tag})

    # --- workflow engine ---

    @app.post("/workflows/deploy")
    async def deploy(request: Request):
        guard("POST")
        template = ctx.engine.deploy(await request.body())
        return _canonical_response({"processKey": template.process_key,
                                    "version": template.version,
                                    "nodes": len(template.nodes),
                                    "flows": len(template.flows)}, 201)

    @app.post("/workflows/{process_key}/start")
    async def start_instance(process_key: str, request: Request):
        guard("POST")
        body = await request.json() if await request.body() else {}
        instance = ctx.engine.start_instance(process_key, body.get("variables", {}))
        return _canonical_response(instance.to_dict(), 201)

    @app.get("/workflows/instances")
    def list_instances(processKey: Optional[str] = None, state: Optional[str] = None):
        items = ctx.engine.list_instances(process_key=processKey, state=state)
        return _canonical_response({"items": [i.to_dict() for i in items]})

    @app.get("/workflows/instances/{instance_id}")
    def get_instance(instance_id: str):
        return _canonical_response(ctx.engine.get_instance(instance_id).to_dict())

    @app.get("/workflows/instances/{instance_id}/audit")
    def audit_trail(instance_id: str):
        records = ctx.engine.get_audit_trail(instance_id)
        return _canonical_response({"items": [r.to_dict() for r in records]})

    @app.get("/tasks")
    def list_tasks(request: Request, group: Optional[str] = None):
        user = getattr(request.state, "user", "") or None
        tasks = ctx.engine.list_open_tasks(candidate_group=group,
                                           user=user if not group else None)
        return _canonical_response({"items": [t.to_dict() for t in tasks]})

    @app.post("/tasks/{task_id}/complete")
    async def complete_task(task_id: str, request: Request):
        guard("POST")
        body = await request.json()
        user = body.get("user") or getattr(request.state, "user", "")
        instance = ctx.engine.complete_user_task(task_id, user, body.get("values", {}))
        return _canonical_response(instance.to_dict())

    @app.post("/events/publish")
    async def publish_event(request: Request):
        guard("POST")
        body = await request.json()
        event = Event(topic=body["topic"], org_id=ctx.org_id,
                      entity_kind=body.get("entityKind", "workflow"),
                      entity_id=body.get("entityId", ""),
                      action=body.get("action", "workflow-signal"),
                      body=body.get("body"))
        ctx.bus.publish(event, publisher=f"api/{ctx.org_id}")
        return _canonical_response({"published": event.event_id}, 202)

    if ctx.static_dir and role == ROLE_INTERNAL:
        from fastapi.staticfiles import StaticFiles
        app.mount("/ui", StaticFiles(directory=ctx.static_dir, html=True), name="ui")

    return app


def build_listeners(ctx: OrgContext) -> tuple[FastAPI, FastAPI]:
    return build_app(ctx, ROLE_INTERNAL), build_app(ctx, ROLE_EXTERNAL)
