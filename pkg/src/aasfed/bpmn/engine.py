"""Execution engine for the BPMN subset: one logical executor per process
instance, injectable clock and HTTP caller, gapless audit trail, and an
append-log persistence of rest-point state."""
from __future__ import annotations

import itertools
import json
import os
import threading
import time
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable, Optional

from ..bus import Event, match_topic
from ..errors import (FormValidation, GraphInvalid, NotFound, TaskNotOpen,
                      UnknownProcess, WrongGroup)
from .expressions import eval_condition
from .parser import (EndEvent, ExclusiveGateway, IntermediateCatchEvent,
                     ServiceTask, StartEvent, UserTask, WorkflowTemplate,
                     parse_bpmn)

STATE_RUNNING = "running"
STATE_COMPLETED = "completed"
STATE_TERMINATED = "terminated"
STATE_EXPIRED = "expired"

# cap on the enum/boolean combinations enumerated for gateway exclusivity
MAX_EXCLUSIVITY_COMBOS = 4096


class WallClock:
    def now(self) -> float:
        return time.time()


class VirtualClock:
    """Deterministic test clock; one tick() advances a fixed step."""

    def __init__(self, start: float = 0.0, tick_s: float = 1.0):
        self._now = start
        self.tick_s = tick_s

    def now(self) -> float:
        return self._now

    def advance(self, seconds: float):
        self._now += seconds

    def tick(self):
        self._now += self.tick_s


def default_http_caller(method: str, url: str, body: str, headers: dict):
    import httpx
    resp = httpx.request(method, url, content=body.encode() if body else None,
                         headers={**headers, "content-type": "application/json"},
                         timeout=10.0)
    return resp.status_code, resp.text


@dataclass
class ProcessInstance:
    instance_id: str
    process_key: str
    process_version: int
    state: str = STATE_RUNNING
    variables: dict = field(default_factory=dict)
    current_node_id: Optional[str] = None
    started_at: str = ""
    ended_at: Optional[str] = None

    def to_dict(self) -> dict:
        return {"instanceId": self.instance_id, "processKey": self.process_key,
                "processVersion": self.process_version, "state": self.state,
                "variables": dict(self.variables),
                "currentNodeId": self.current_node_id,
                "startedAt": self.started_at, "endedAt": self.ended_at}


@dataclass
class UserTaskInstance:
    task_id: str
    instance_id: str
    node_id: str
    name: str
    candidate_group: str
    form_fields: list
    status: str = "open"
    submitted_by: Optional[str] = None
    submitted_values: Optional[dict] = None

    def to_dict(self) -> dict:
        return {"taskId": self.task_id, "instanceId": self.instance_id,
                "nodeId": self.node_id, "name": self.name,
                "candidateGroup": self.candidate_group,
                "formFields": [f.to_dict() for f in self.form_fields],
                "status": self.status, "submittedBy": self.submitted_by,
                "submittedValues": self.submitted_values}


@dataclass
class AuditRecord:
    seq: int
    timestamp: str
    instance_id: str
    event: str
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"seq": self.seq, "timestamp": self.timestamp,
                "instanceId": self.instance_id, "event": self.event,
                "detail": self.detail}


@dataclass
class _Timer:
    instance_id: str
    node_id: str
    fire_at: float
    is_timeout: bool  # timeout branch of a message catch vs a plain timer


class BpmnEngine:
    def __init__(self, clock=None, http_caller: Optional[Callable] = None,
                 users: Optional[dict[str, list[str]]] = None,
                 data_dir: Optional[str] = None,
                 id_factory: Optional[Callable[[], str]] = None):
        self.clock = clock or WallClock()
        self.http_caller = http_caller or default_http_caller
        self.id_factory = id_factory or (lambda: str(uuid.uuid4()))
        # merged under every instance's variables (instance values win); the
        # orchestrator injects per-organization endpoints here
        self.base_variables: dict = {}
        self.users = dict(users or {})
        self.data_dir = data_dir
        self.templates: dict[str, WorkflowTemplate] = {}
        self.instances: dict[str, ProcessInstance] = {}
        self.tasks: dict[str, UserTaskInstance] = {}
        self.audit: list[AuditRecord] = []
        self._timers: list[_Timer] = []
        self._seq = 0
        self._lock = threading.RLock()
        self._attempt_epochs: dict[tuple[str, str], int] = {}
        if data_dir:
            os.makedirs(data_dir, exist_ok=True)
            self._state_path = os.path.join(data_dir, "instances.jsonl")
            self._audit_path = os.path.join(data_dir, "audit.jsonl")
            self._recover()
        else:
            self._state_path = self._audit_path = None

    # --- audit ---

    def _record(self, instance_id: str, event: str, **detail) -> AuditRecord:
        with self._lock:
            self._seq += 1
            rec = AuditRecord(seq=self._seq,
                              timestamp=datetime.now(timezone.utc).isoformat(),
                              instance_id=instance_id, event=event, detail=detail)
            self.audit.append(rec)
            if self._audit_path:
                with open(self._audit_path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")
            return rec

    # --- deployment ---

    def deploy(self, xml_or_template) -> WorkflowTemplate:
        template = (xml_or_template if isinstance(xml_or_template, WorkflowTemplate)
                    else parse_bpmn(xml_or_template))
        _validate_gateway_exclusivity(template)
        with self._lock:
            previous = self.templates.get(template.process_key)
            template.version = previous.version + 1 if previous else 1
            self.templates[template.process_key] = template
        return template

    # --- execution ---

    def start_instance(self, process_key: str, variables: Optional[dict] = None
                       ) -> ProcessInstance:
        with self._lock:
            template = self.templates.get(process_key)
            if template is None:
                raise UnknownProcess(process_key)
            merged = dict(self.base_variables)
            merged.update(variables or {})
            instance = ProcessInstance(
                instance_id=self.id_factory(), process_key=process_key,
                process_version=template.version, variables=merged,
                started_at=datetime.now(timezone.utc).isoformat())
            self.instances[instance.instance_id] = instance
            self._record(instance.instance_id, "instance-created",
                         processKey=process_key, variables=dict(instance.variables))
            start = template.start_node()
            self._enter_node(instance, template, start.node_id)
            return instance

    def _enter_node(self, instance: ProcessInstance, template: WorkflowTemplate,
                    node_id: str):
        # token loop: run until the instance rests or ends
        while True:
            node = template.nodes[node_id]
            instance.current_node_id = node_id
            self._record(instance.instance_id, "node-entered", nodeId=node_id,
                         nodeKind=node.kind)

            if isinstance(node, StartEvent):
                next_id = self._take_single_flow(instance, template, node_id)

            elif isinstance(node, EndEvent):
                self._record(instance.instance_id, "node-completed", nodeId=node_id)
                self._end_instance(instance, node.outcome)
                return

            elif isinstance(node, UserTask):
                task = UserTaskInstance(task_id=self.id_factory(),
                                        instance_id=instance.instance_id,
                                        node_id=node_id, name=node.name,
                                        candidate_group=node.candidate_group,
                                        form_fields=list(node.form_fields))
                self.tasks[task.task_id] = task
                self._record(instance.instance_id, "task-assigned",
                             taskId=task.task_id, nodeId=node_id,
                             candidateGroup=node.candidate_group)
                self._persist_rest_point(instance)
                return

            elif isinstance(node, ServiceTask):
                self._execute_service_task(instance, node)
                self._record(instance.instance_id, "node-completed", nodeId=node_id)
                next_id = self._take_single_flow(instance, template, node_id)

            elif isinstance(node, ExclusiveGateway):
                next_id = self._take_gateway_flow(instance, template, node)
                if next_id is None:
                    self._end_instance(instance, STATE_TERMINATED)
                    return

            elif isinstance(node, IntermediateCatchEvent):
                if node.timer_ms is not None:
                    self._timers.append(_Timer(instance.instance_id, node_id,
                                               self.clock.now() + node.timer_ms / 1000.0,
                                               is_timeout=False))
                elif node.timeout_ms is not None:
                    self._timers.append(_Timer(instance.instance_id, node_id,
                                               self.clock.now() + node.timeout_ms / 1000.0,
                                               is_timeout=True))
                self._persist_rest_point(instance)
                return

            else:  # unreachable with a validated template
                raise GraphInvalid(f"cannot execute node kind {node.kind}")

            node_id = next_id

    def _take_single_flow(self, instance, template, node_id: str) -> str:
        flow = template.outgoing(node_id)[0]
        self._record(instance.instance_id, "flow-taken", flowId=flow.flow_id,
                     conditionResult=None)
        return flow.target

    def _take_gateway_flow(self, instance, template, node) -> Optional[str]:
        default = None
        for flow in template.outgoing(node.node_id):
            if flow.flow_id == node.default_flow or flow.condition is None:
                default = default or flow
                continue
            result, problem = eval_condition(flow.condition, instance.variables)
            if problem:
                self._record(instance.instance_id, "condition-degraded",
                             flowId=flow.flow_id, reason=problem)
            if result:
                self._record(instance.instance_id, "node-completed", nodeId=node.node_id)
                self._record(instance.instance_id, "flow-taken", flowId=flow.flow_id,
                             conditionResult=True)
                return flow.target
        self._record(instance.instance_id, "node-completed", nodeId=node.node_id)
        if default is not None:
            self._record(instance.instance_id, "flow-taken", flowId=default.flow_id,
                         conditionResult="default")
            return default.target
        self._record(instance.instance_id, "no-flow-satisfiable", nodeId=node.node_id)
        return None

    def _execute_service_task(self, instance, node: ServiceTask):
        variables = instance.variables
        url = _render(node.url_template, variables)
        body = _render(node.body_template, variables)
        epoch_key = (instance.instance_id, node.node_id)
        epoch = self._attempt_epochs.get(epoch_key, 0) + 1
        self._attempt_epochs[epoch_key] = epoch
        headers = {"Idempotency-Key": f"{instance.instance_id}:{node.node_id}:{epoch}"}
        status = None
        response = ""
        for attempt in (1, 2):  # one retry, deduplicated by the idempotency key
            try:
                status, response = self.http_caller(node.http_method, url, body, headers)
                break
            except Exception as exc:
                if attempt == 2:
                    status, response = 0, repr(exc)
        self._record(instance.instance_id, "service-call",
                     request={"method": node.http_method, "url": url, "body": body},
                     responseCode=status)
        if node.result_variable:
            variables[node.result_variable] = response
            variables[f"{node.result_variable}_status"] = status

    def _end_instance(self, instance: ProcessInstance, state: str):
        instance.state = state
        instance.current_node_id = None
        instance.ended_at = datetime.now(timezone.utc).isoformat()
        self._timers = [t for t in self._timers if t.instance_id != instance.instance_id]
        for task in self.tasks.values():
            if task.instance_id == instance.instance_id and task.status == "open":
                task.status = "completed"
        self._record(instance.instance_id, "instance-ended", state=state)
        self._persist_rest_point(instance)

    # --- user tasks ---

    def complete_user_task(self, task_id: str, user: str, values: dict
                           ) -> ProcessInstance:
        with self._lock:
            task = self.tasks.get(task_id)
            if task is None or task.status != "open":
                raise TaskNotOpen(task_id)
            groups = self.users.get(user, [])
            if task.candidate_group not in groups:
                raise WrongGroup(
                    f"user {user!r} is not in group {task.candidate_group!r}")
            coerced = _validate_form(task.form_fields, values)
            instance = self.instances[task.instance_id]
            template = self.templates[instance.process_key]
            task.status = "completed"
            task.submitted_by = user
            task.submitted_values = coerced
            instance.variables.update(coerced)
            self._record(instance.instance_id, "task-completed", taskId=task_id,
                         user=user, values=coerced)
            self._record(instance.instance_id, "node-completed", nodeId=task.node_id)
            next_id = self._take_single_flow(instance, template, task.node_id)
            self._enter_node(instance, template, next_id)
            return instance

    def list_open_tasks(self, candidate_group: Optional[str] = None,
                        user: Optional[str] = None) -> list[UserTaskInstance]:
        with self._lock:
            groups = None
            if user is not None:
                groups = set(self.users.get(user, []))
            out = []
            for task in self.tasks.values():
                if task.status != "open":
                    continue
                if candidate_group is not None and task.candidate_group != candidate_group:
                    continue
                if groups is not None and task.candidate_group not in groups:
                    continue
                out.append(task)
            return sorted(out, key=lambda t: t.task_id)

    # --- messages and timers ---

    def deliver_message(self, event: Event) -> list[ProcessInstance]:
        affected = []
        with self._lock:
            for instance in list(self.instances.values()):
                if instance.state != STATE_RUNNING or instance.current_node_id is None:
                    continue
                template = self.templates[instance.process_key]
                node = template.nodes.get(instance.current_node_id)
                if not isinstance(node, IntermediateCatchEvent) or node.message_topic is None:
                    continue
                if not match_topic(node.message_topic, event.topic):
                    continue
                if node.correlation_variable is not None:
                    if instance.variables.get(node.correlation_variable) != event.entity_id:
                        continue
                self._record(instance.instance_id, "message-received",
                             topic=event.topic, entityId=event.entity_id,
                             nodeId=node.node_id)
                self._timers = [t for t in self._timers
                                if not (t.instance_id == instance.instance_id
                                        and t.node_id == node.node_id)]
                self._record(instance.instance_id, "node-completed", nodeId=node.node_id)
                out = [f for f in template.outgoing(node.node_id) if not f.is_timeout]
                flow = out[0]
                self._record(instance.instance_id, "flow-taken", flowId=flow.flow_id,
                             conditionResult=None)
                self._enter_node(instance, template, flow.target)
                affected.append(instance)

            # message-triggered starts
            for template in list(self.templates.values()):
                start = template.start_node()
                if start.message_topic and match_topic(start.message_topic, event.topic):
                    variables = {"eventTopic": event.topic, "entityId": event.entity_id,
                                 "eventOrg": event.org_id}
                    if isinstance(event.body, dict):
                        variables.update({k: v for k, v in event.body.items()
                                          if isinstance(v, (str, int, float, bool))})
                    affected.append(self.start_instance(template.process_key, variables))
        return affected

    def fire_timers(self, now: Optional[float] = None) -> list[ProcessInstance]:
        now = self.clock.now() if now is None else now
        affected = []
        with self._lock:
            due = [t for t in self._timers if t.fire_at <= now]
            self._timers = [t for t in self._timers if t.fire_at > now]
            for timer in due:
                instance = self.instances.get(timer.instance_id)
                if instance is None or instance.state != STATE_RUNNING:
                    continue
                if instance.current_node_id != timer.node_id:
                    continue
                template = self.templates[instance.process_key]
                node = template.nodes[timer.node_id]
                self._record(instance.instance_id, "timer-fired", nodeId=timer.node_id)
                self._record(instance.instance_id, "node-completed", nodeId=timer.node_id)
                out = template.outgoing(timer.node_id)
                if timer.is_timeout:
                    flow = next(f for f in out if f.is_timeout)
                else:
                    flow = out[0]
                self._record(instance.instance_id, "flow-taken", flowId=flow.flow_id,
                             conditionResult=None)
                self._enter_node(instance, template, flow.target)
                affected.append(instance)
        return affected

    # --- read views ---

    def list_instances(self, process_key: Optional[str] = None,
                       state: Optional[str] = None) -> list[ProcessInstance]:
        with self._lock:
            out = [i for i in self.instances.values()
                   if (process_key is None or i.process_key == process_key)
                   and (state is None or i.state == state)]
            return sorted(out, key=lambda i: (i.started_at, i.instance_id))

    def get_instance(self, instance_id: str) -> ProcessInstance:
        instance = self.instances.get(instance_id)
        if instance is None:
            raise NotFound(f"instance {instance_id}")
        return instance

    def get_audit_trail(self, instance_id: str) -> list[AuditRecord]:
        if instance_id not in self.instances:
            raise NotFound(f"instance {instance_id}")
        return [r for r in self.audit if r.instance_id == instance_id]

    # --- persistence ---

    def _persist_rest_point(self, instance: ProcessInstance):
        if not self._state_path:
            return
        snapshot = {"instance": instance.to_dict(),
                    "tasks": [t.to_dict() for t in self.tasks.values()
                              if t.instance_id == instance.instance_id],
                    "timers": [{"instanceId": t.instance_id, "nodeId": t.node_id,
                                "fireAt": t.fire_at, "isTimeout": t.is_timeout}
                               for t in self._timers
                               if t.instance_id == instance.instance_id]}
        with open(self._state_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(snapshot, sort_keys=True) + "\n")

    def _recover(self):
        if not os.path.exists(self._state_path):
            if os.path.exists(self._audit_path):
                with open(self._audit_path, encoding="utf-8") as fh:
                    for line in fh:
                        rec = json.loads(line)
                        self._seq = max(self._seq, rec["seq"])
            return
        latest: dict[str, dict] = {}
        with open(self._state_path, encoding="utf-8") as fh:
            for line in fh:
                snap = json.loads(line)
                latest[snap["instance"]["instanceId"]] = snap
        for snap in latest.values():
            d = snap["instance"]
            instance = ProcessInstance(
                instance_id=d["instanceId"], process_key=d["processKey"],
                process_version=d["processVersion"], state=d["state"],
                variables=d["variables"], current_node_id=d["currentNodeId"],
                started_at=d["startedAt"], ended_at=d["endedAt"])
            self.instances[instance.instance_id] = instance
            for td in snap["tasks"]:
                from .parser import FormField
                task = UserTaskInstance(
                    task_id=td["taskId"], instance_id=td["instanceId"],
                    node_id=td["nodeId"], name=td["name"],
                    candidate_group=td["candidateGroup"],
                    form_fields=[FormField(name=f["name"], type=f["type"],
                                           required=f["required"],
                                           options=tuple(f["options"]))
                                 for f in td["formFields"]],
                    status=td["status"], submitted_by=td["submittedBy"],
                    submitted_values=td["submittedValues"])
                self.tasks[task.task_id] = task
            for tm in snap["timers"]:
                self._timers.append(_Timer(tm["instanceId"], tm["nodeId"],
                                           tm["fireAt"], tm["isTimeout"]))
        if os.path.exists(self._audit_path):
            with open(self._audit_path, encoding="utf-8") as fh:
                for line in fh:
                    rec = json.loads(line)
                    self._seq = max(self._seq, rec["seq"])


def _render(template: str, variables: dict) -> str:
    """{name} placeholder substitution; unknown names render empty."""
    if not template:
        return ""

    class _Safe(dict):
        def __missing__(self, key):
            return ""

    return template.format_map(_Safe({k: v for k, v in variables.items()}))


def _validate_form(fields, values: dict) -> dict:
    errors = []
    coerced = {}
    declared = {f.name: f for f in fields}
    for name in values:
        if name not in declared:
            errors.append(f"unknown field {name!r}")
    for f in fields:
        if f.name not in values or values[f.name] in (None, ""):
            if f.required:
                errors.append(f"missing required field {f.name!r}")
            continue
        value = values[f.name]
        if f.type == "string":
            if not isinstance(value, str):
                errors.append(f"field {f.name!r} must be a string")
                continue
            coerced[f.name] = value
        elif f.type == "boolean":
            if isinstance(value, bool):
                coerced[f.name] = value
            elif value in ("true", "false"):
                coerced[f.name] = value == "true"
            else:
                errors.append(f"field {f.name!r} must be boolean")
        elif f.type == "enum":
            if value not in f.options:
                errors.append(f"field {f.name!r} must be one of {list(f.options)}")
            else:
                coerced[f.name] = value
    if errors:
        raise FormValidation(errors)
    return coerced


def _validate_gateway_exclusivity(template: WorkflowTemplate):
    """Deploy-time check: over every combination of the template's enumerable
    form values, at most one non-default gateway condition is true."""
    domains: dict[str, list] = {}
    for node in template.nodes.values():
        if isinstance(node, UserTask):
            for f in node.form_fields:
                if f.type == "enum":
                    domains[f.name] = list(f.options)
                elif f.type == "boolean":
                    domains[f.name] = [True, False]

    for node in template.nodes.values():
        if not isinstance(node, ExclusiveGateway):
            continue
        conditional = [f for f in template.outgoing(node.node_id)
                       if f.condition is not None and f.flow_id != node.default_flow]
        if len(conditional) < 2:
            continue
        used = [c.condition.variable for c in conditional]
        enum_vars = [v for v in sorted(set(used)) if v in domains]
        combos = 1
        for v in enum_vars:
            combos *= len(domains[v])
        if combos > MAX_EXCLUSIVITY_COMBOS:
            continue  # too large to enumerate; runtime still takes the first true flow
        for combo in itertools.product(*(domains[v] for v in enum_vars)) or [()]:
            variables = dict(zip(enum_vars, combo))
            true_flows = [f.flow_id for f in conditional
                          if eval_condition(f.condition, variables)[0]]
            if len(true_flows) > 1:
                raise GraphInvalid(
                    f"{node.node_id}: conditions not mutually exclusive for "
                    f"{variables!r}: {true_flows}")
