"""In-process publish/subscribe backbone with MQTT-compatible topic filters.

A single broker instance is shared by every organization in a federation
harness; topics are namespaced by orgId so a real external MQTT broker could
replace this component without renaming any topic.
"""
from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable, Optional

from .errors import BusClosed, MalformedPattern
from .model import canonical_json

MAX_TOPIC_LEVELS = 64
MAX_DELIVERY_ATTEMPTS = 5
DEFAULT_BACKOFF_BASE_S = 0.05


def utcnow_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


def validate_topic(topic: str):
    if not topic:
        raise MalformedPattern("empty topic")
    levels = topic.split("/")
    if len(levels) > MAX_TOPIC_LEVELS:
        raise MalformedPattern(f"more than {MAX_TOPIC_LEVELS} topic levels")
    if "+" in levels or "#" in levels or any("+" in l or "#" in l for l in levels):
        raise MalformedPattern(f"wildcards not allowed in publish topic: {topic!r}")


def validate_pattern(pattern: str):
    if not pattern:
        raise MalformedPattern("empty pattern")
    levels = pattern.split("/")
    if len(levels) > MAX_TOPIC_LEVELS:
        raise MalformedPattern(f"more than {MAX_TOPIC_LEVELS} pattern levels")
    for i, level in enumerate(levels):
        if level == "#":
            if i != len(levels) - 1:
                raise MalformedPattern("'#' must be the final level")
        elif "#" in level or ("+" in level and level != "+"):
            raise MalformedPattern(f"wildcard must occupy a whole level: {level!r}")


def match_topic(pattern: str, topic: str) -> bool:
    """Standard MQTT filter matching: '+' one level, trailing '#' multi-level."""
    validate_pattern(pattern)
    plevels = pattern.split("/")
    tlevels = topic.split("/")
    for i, p in enumerate(plevels):
        if p == "#":
            return True
        if i >= len(tlevels):
            return False
        if p != "+" and p != tlevels[i]:
            return False
    return len(plevels) == len(tlevels)


@dataclass
class Event:
    topic: str
    org_id: str
    entity_kind: str
    entity_id: str
    action: str  # created | updated | deleted | workflow-signal
    version: Optional[int] = None
    body: Optional[dict] = None
    event_id: str = field(default_factory=lambda: str(uuid.uuid4()))
    occurred_at: str = field(default_factory=utcnow_iso)
    publisher_seq: int = 0

    def envelope(self) -> dict:
        env = {"eventId": self.event_id, "occurredAt": self.occurred_at,
               "orgId": self.org_id, "entityKind": self.entity_kind,
               "entityId": self.entity_id, "action": self.action,
               "publisherSeq": self.publisher_seq}
        if self.version is not None:
            env["version"] = self.version
        if self.body is not None:
            env["body"] = self.body
        return env

    def envelope_bytes(self) -> bytes:
        return canonical_json(self.envelope())


class Subscription:
    def __init__(self, bus: "EventBus", pattern: str, handler: Callable[[Event], None]):
        validate_pattern(pattern)
        self.bus = bus
        self.pattern = pattern
        self.handler = handler
        self.active = True
        # per-subscription serial execution: one in-flight event at a time;
        # reentrant so a handler that (indirectly) publishes a matching event
        # recurses instead of deadlocking
        self._lock = threading.RLock()

    def unsubscribe(self):
        self.bus.unsubscribe(self)


class EventBus:
    """Synchronous-delivery broker with at-least-once retry semantics.

    publish() blocks until every matching subscription has either handled the
    event or exhausted its retry budget (then the event is dead-lettered).
    Per-(publisher, subscription) order follows from synchronous delivery.
    """

    def __init__(self, dead_letter_path: Optional[str] = None,
                 backoff_base_s: float = DEFAULT_BACKOFF_BASE_S):
        self._subs: list[Subscription] = []
        self._lock = threading.Lock()
        self._closed = False
        self._seq_by_publisher: dict[str, int] = {}
        self.backoff_base_s = backoff_base_s
        self.dead_letter_path = dead_letter_path
        self.dead_letters: list[dict] = []
        self.delivery_counts: dict[str, int] = {}  # event_id -> total handler invocations

    def subscribe(self, pattern: str, handler: Callable[[Event], None]) -> Subscription:
        if self._closed:
            raise BusClosed("bus is closed")
        sub = Subscription(self, pattern, handler)
        with self._lock:
            self._subs.append(sub)
        return sub

    def unsubscribe(self, sub: Subscription):
        sub.active = False
        with self._lock:
            if sub in self._subs:
                self._subs.remove(sub)

    def publish(self, event: Event, publisher: str = "default"):
        if self._closed:
            raise BusClosed("bus is closed")
        validate_topic(event.topic)
        with self._lock:
            seq = self._seq_by_publisher.get(publisher, 0) + 1
            self._seq_by_publisher[publisher] = seq
            subs = [s for s in self._subs if match_topic(s.pattern, event.topic)]
        event.publisher_seq = seq
        for sub in subs:
            self._deliver(sub, event)

    def _deliver(self, sub: Subscription, event: Event):
        with sub._lock:
            last_exc = None
            for attempt in range(MAX_DELIVERY_ATTEMPTS):
                if not sub.active:
                    return
                if attempt:
                    time.sleep(self.backoff_base_s * (2 ** (attempt - 1)))
                try:
                    self.delivery_counts[event.event_id] = \
                        self.delivery_counts.get(event.event_id, 0) + 1
                    sub.handler(event)
                    return
                except Exception as exc:  # handler failure: retry, then dead-letter
                    last_exc = exc
            self._dead_letter(sub, event, last_exc)

    def _dead_letter(self, sub: Subscription, event: Event, exc: Exception):
        record = {"pattern": sub.pattern, "error": repr(exc),
                  "deadLetteredAt": utcnow_iso(), "event": event.envelope(),
                  "topic": event.topic}
        self.dead_letters.append(record)
        if self.dead_letter_path:
            with open(self.dead_letter_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")

    def close(self):
        self._closed = True
        with self._lock:
            for sub in self._subs:
                sub.active = False
            self._subs.clear()


# Topic scheme helpers

def shell_topic(org_id: str, encoded_id: str, action: str) -> str:
    return f"aas-repo/{org_id}/shells/{encoded_id}/{action}"


def submodel_topic(org_id: str, encoded_id: str, action: str) -> str:
    return f"sm-repo/{org_id}/submodels/{encoded_id}/{action}"


def workflow_topic(org_id: str, process_key: str, instance_id: str, signal: str) -> str:
    return f"workflow/{org_id}/{process_key}/{instance_id}/{signal}"
