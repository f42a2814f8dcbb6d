"""Parser for the closed BPMN 2.0 XML subset executed by this engine.

Supported flow nodes: startEvent (plain or message-triggered), endEvent,
userTask, serviceTask, exclusiveGateway, intermediateCatchEvent (timer or
message). Anything else in the process is a hard parse error, never silently
ignored. Engine-specific configuration (forms, topics, HTTP bindings) lives
in a vendor extension namespace; see docs/bpmn-subset.md.
"""
from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Optional

from ..errors import GraphInvalid, UnsupportedElement, XmlMalformed
from .expressions import Condition, parse_condition

BPMN_NS = "http://www.omg.org/spec/BPMN/20100524/MODEL"
EXT_NS = "urn:aasfed:bpmn:ext"

_SUPPORTED = {"startEvent", "endEvent", "userTask", "serviceTask",
              "exclusiveGateway", "intermediateCatchEvent", "sequenceFlow"}
_IGNORED = {"documentation", "extensionElements", "incoming", "outgoing"}

OUTCOMES = ("completed", "terminated", "expired")


@dataclass(frozen=True)
class FormField:
    name: str
    type: str                     # string | boolean | enum
    required: bool = False
    options: tuple = ()           # enum only

    def to_dict(self) -> dict:
        return {"name": self.name, "type": self.type, "required": self.required,
                "options": list(self.options)}


@dataclass(frozen=True)
class StartEvent:
    node_id: str
    name: str = ""
    message_topic: Optional[str] = None
    kind = "StartEvent"


@dataclass(frozen=True)
class EndEvent:
    node_id: str
    name: str = ""
    outcome: str = "completed"
    kind = "EndEvent"


@dataclass(frozen=True)
class UserTask:
    node_id: str
    name: str = ""
    candidate_group: str = ""
    form_fields: tuple = ()
    kind = "UserTask"


@dataclass(frozen=True)
class ServiceTask:
    node_id: str
    name: str = ""
    http_method: str = "POST"
    url_template: str = ""
    body_template: str = ""
    result_variable: str = ""
    kind = "ServiceTask"


@dataclass(frozen=True)
class ExclusiveGateway:
    node_id: str
    name: str = ""
    default_flow: Optional[str] = None
    kind = "ExclusiveGateway"


@dataclass(frozen=True)
class IntermediateCatchEvent:
    node_id: str
    name: str = ""
    timer_ms: Optional[int] = None
    message_topic: Optional[str] = None
    correlation_variable: Optional[str] = None
    timeout_ms: Optional[int] = None  # optional racing timeout on a message catch
    kind = "IntermediateCatchEvent"


@dataclass(frozen=True)
class SequenceFlow:
    flow_id: str
    source: str
    target: str
    condition: Optional[Condition] = None
    is_timeout: bool = False      # timeout branch of a message catch


@dataclass
class WorkflowTemplate:
    process_key: str
    name: str
    nodes: dict                   # node_id -> node
    flows: list                   # document order
    version: int = 1

    def outgoing(self, node_id: str) -> list:
        return [f for f in self.flows if f.source == node_id]

    def start_node(self) -> StartEvent:
        return next(n for n in self.nodes.values() if isinstance(n, StartEvent))


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _ext(el: ET.Element, attr: str, default: str = "") -> str:
    return el.get(f"{{{EXT_NS}}}{attr}", default)


def parse_bpmn(xml_bytes) -> WorkflowTemplate:
    if isinstance(xml_bytes, str):
        xml_bytes = xml_bytes.encode("utf-8")
    try:
        root = ET.fromstring(xml_bytes)
    except ET.ParseError as exc:
        raise XmlMalformed(str(exc)) from exc
    if _local(root.tag) == "process":
        process = root
    else:
        process = root.find(f"{{{BPMN_NS}}}process")
        if process is None:
            raise XmlMalformed("no <process> element found")
    process_key = process.get("id")
    if not process_key:
        raise XmlMalformed("<process> has no id")

    nodes: dict = {}
    flows: list[SequenceFlow] = []
    unsupported: list[str] = []

    for child in process:
        tag = _local(child.tag)
        if tag in _IGNORED:
            continue
        if tag not in _SUPPORTED:
            unsupported.append(tag)
            continue
        if tag == "sequenceFlow":
            flows.append(_parse_flow(child))
            continue
        node = _parse_node(tag, child, unsupported)
        if node is None:
            continue
        if node.node_id in nodes:
            raise GraphInvalid(f"duplicate node id {node.node_id!r}")
        nodes[node.node_id] = node

    if unsupported:
        raise UnsupportedElement(sorted(set(unsupported)))

    template = WorkflowTemplate(process_key=process_key,
                                name=process.get("name", process_key),
                                nodes=nodes, flows=flows)
    _validate_graph(template)
    return template


def _require_id(el: ET.Element) -> str:
    node_id = el.get("id")
    if not node_id:
        raise GraphInvalid(f"<{_local(el.tag)}> has no id")
    return node_id


def _parse_node(tag: str, el: ET.Element, unsupported: list):
    node_id = _require_id(el)
    name = el.get("name", "")

    if tag == "startEvent":
        topic = None
        for sub in el:
            stag = _local(sub.tag)
            if stag == "messageEventDefinition":
                topic = _ext(sub, "topicPattern") or None
                if topic is None:
                    raise GraphInvalid(f"{node_id}: message start needs ext:topicPattern")
            elif stag not in _IGNORED:
                unsupported.append(stag)
        return StartEvent(node_id=node_id, name=name, message_topic=topic)

    if tag == "endEvent":
        outcome = "completed"
        for sub in el:
            stag = _local(sub.tag)
            if stag == "terminateEventDefinition":
                outcome = "terminated"
            elif stag not in _IGNORED:
                unsupported.append(stag)
        override = _ext(el, "outcome")
        if override:
            if override not in OUTCOMES:
                raise GraphInvalid(f"{node_id}: unknown outcome {override!r}")
            outcome = override
        return EndEvent(node_id=node_id, name=name, outcome=outcome)

    if tag == "userTask":
        group = _ext(el, "candidateGroup")
        if not group:
            raise GraphInvalid(f"{node_id}: userTask needs ext:candidateGroup")
        fields = []
        ext_el = el.find(f"{{{BPMN_NS}}}extensionElements")
        if ext_el is not None:
            for fe in ext_el.findall(f"{{{EXT_NS}}}formField"):
                fields.append(_parse_form_field(node_id, fe))
        return UserTask(node_id=node_id, name=name, candidate_group=group,
                        form_fields=tuple(fields))

    if tag == "serviceTask":
        url = _ext(el, "url")
        if not url:
            raise GraphInvalid(f"{node_id}: serviceTask needs ext:url")
        return ServiceTask(node_id=node_id, name=name,
                           http_method=_ext(el, "method", "POST").upper(),
                           url_template=url, body_template=_ext(el, "body"),
                           result_variable=_ext(el, "resultVariable"))

    if tag == "exclusiveGateway":
        return ExclusiveGateway(node_id=node_id, name=name,
                                default_flow=el.get("default"))

    if tag == "intermediateCatchEvent":
        timer_ms = message_topic = correlation = timeout_ms = None
        for sub in el:
            stag = _local(sub.tag)
            if stag == "timerEventDefinition":
                raw = _ext(sub, "durationMs")
                if not raw or not raw.isdigit() or int(raw) <= 0:
                    raise GraphInvalid(f"{node_id}: timer needs positive ext:durationMs")
                timer_ms = int(raw)
            elif stag == "messageEventDefinition":
                message_topic = _ext(sub, "topicPattern") or None
                if message_topic is None:
                    raise GraphInvalid(f"{node_id}: message catch needs ext:topicPattern")
                correlation = _ext(sub, "correlationVariable") or None
                raw = _ext(sub, "timeoutMs")
                if raw:
                    if not raw.isdigit() or int(raw) <= 0:
                        raise GraphInvalid(f"{node_id}: ext:timeoutMs must be positive")
                    timeout_ms = int(raw)
            elif stag not in _IGNORED:
                unsupported.append(stag)
        if (timer_ms is None) == (message_topic is None):
            raise GraphInvalid(f"{node_id}: catch event needs exactly one of "
                               "timer or message definition")
        return IntermediateCatchEvent(node_id=node_id, name=name, timer_ms=timer_ms,
                                      message_topic=message_topic,
                                      correlation_variable=correlation,
                                      timeout_ms=timeout_ms)
    return None


def _parse_form_field(node_id: str, fe: ET.Element) -> FormField:
    name = fe.get("name")
    ftype = fe.get("type", "string")
    if not name:
        raise GraphInvalid(f"{node_id}: formField needs a name")
    if ftype not in ("string", "boolean", "enum"):
        raise GraphInvalid(f"{node_id}: formField {name!r} has unknown type {ftype!r}")
    options = tuple(o for o in (fe.get("options", "").split(",")) if o)
    if ftype == "enum" and not options:
        raise GraphInvalid(f"{node_id}: enum formField {name!r} needs options")
    return FormField(name=name, type=ftype,
                     required=fe.get("required", "false") == "true",
                     options=options)


def _parse_flow(el: ET.Element) -> SequenceFlow:
    flow_id = _require_id(el)
    source = el.get("sourceRef")
    target = el.get("targetRef")
    if not source or not target:
        raise GraphInvalid(f"flow {flow_id!r} needs sourceRef and targetRef")
    condition = None
    cond_el = el.find(f"{{{BPMN_NS}}}conditionExpression")
    if cond_el is not None and (cond_el.text or "").strip():
        condition = parse_condition(cond_el.text.strip())
    return SequenceFlow(flow_id=flow_id, source=source, target=target,
                        condition=condition,
                        is_timeout=_ext(el, "timeout") == "true")


def _validate_graph(t: WorkflowTemplate):
    starts = [n for n in t.nodes.values() if isinstance(n, StartEvent)]
    ends = [n for n in t.nodes.values() if isinstance(n, EndEvent)]
    if len(starts) != 1:
        raise GraphInvalid(f"process needs exactly one start event, found {len(starts)}")
    if not ends:
        raise GraphInvalid("process needs at least one end event")
    flow_ids = set()
    for f in t.flows:
        if f.flow_id in flow_ids or f.flow_id in t.nodes:
            raise GraphInvalid(f"duplicate id {f.flow_id!r}")
        flow_ids.add(f.flow_id)
        if f.source not in t.nodes:
            raise GraphInvalid(f"flow {f.flow_id!r}: unknown source {f.source!r}")
        if f.target not in t.nodes:
            raise GraphInvalid(f"flow {f.flow_id!r}: unknown target {f.target!r}")

    for node in t.nodes.values():
        out = t.outgoing(node.node_id)
        if isinstance(node, EndEvent):
            if out:
                raise GraphInvalid(f"{node.node_id}: end event has outgoing flows")
            continue
        if not out:
            raise GraphInvalid(f"{node.node_id}: non-end node has no outgoing flow")
        if isinstance(node, ExclusiveGateway):
            if node.default_flow is not None:
                default = next((f for f in out if f.flow_id == node.default_flow), None)
                if default is None:
                    raise GraphInvalid(
                        f"{node.node_id}: default flow {node.default_flow!r} "
                        "does not leave this gateway")
        elif isinstance(node, IntermediateCatchEvent) and node.timeout_ms is not None:
            timeout_flows = [f for f in out if f.is_timeout]
            normal_flows = [f for f in out if not f.is_timeout]
            if len(timeout_flows) != 1 or len(normal_flows) != 1:
                raise GraphInvalid(
                    f"{node.node_id}: a message catch with a timeout needs exactly "
                    "one timeout flow and one normal flow")
        else:
            if len(out) != 1:
                raise GraphInvalid(
                    f"{node.node_id}: expected exactly one outgoing flow, got {len(out)}")

    start = starts[0]
    reachable = {start.node_id}
    frontier = [start.node_id]
    while frontier:
        current = frontier.pop()
        for f in t.outgoing(current):
            if f.target not in reachable:
                reachable.add(f.target)
                frontier.append(f.target)
    unreachable = set(t.nodes) - reachable
    if unreachable:
        raise GraphInvalid(f"unreachable node(s): {', '.join(sorted(unreachable))}")
