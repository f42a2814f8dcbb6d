"""Condition expression grammar for sequence flows.

    cond    := ident op literal | ident
    op      := '==' | '!='
    literal := 'string' | number | true | false

Parsing errors are deploy-time failures; evaluation never raises at runtime:
a missing variable or a type mismatch evaluates to false (and is reported to
the caller for audit logging).
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional, Union

from ..errors import BadExpression

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_NUMBER_RE = re.compile(r"-?\d+(\.\d+)?")
_STRING_RE = re.compile(r"'([^']*)'")

Literal = Union[str, int, float, bool]


@dataclass(frozen=True)
class Condition:
    text: str
    variable: str
    op: Optional[str] = None       # None for a bare boolean variable
    literal: Optional[Literal] = None


def parse_condition(text: str) -> Condition:
    s = text.strip()
    pos = 0
    m = _IDENT_RE.match(s, pos)
    if not m:
        raise BadExpression(text, pos)
    ident = m.group(0)
    pos = m.end()
    while pos < len(s) and s[pos] == " ":
        pos += 1
    if pos == len(s):
        return Condition(text=text, variable=ident)
    op = s[pos:pos + 2]
    if op not in ("==", "!="):
        raise BadExpression(text, pos)
    pos += 2
    while pos < len(s) and s[pos] == " ":
        pos += 1
    literal, end = _parse_literal(text, s, pos)
    pos = end
    while pos < len(s) and s[pos] == " ":
        pos += 1
    if pos != len(s):
        raise BadExpression(text, pos)
    return Condition(text=text, variable=ident, op=op, literal=literal)


def _parse_literal(original: str, s: str, pos: int):
    m = _STRING_RE.match(s, pos)
    if m:
        return m.group(1), m.end()
    m = _NUMBER_RE.match(s, pos)
    if m:
        raw = m.group(0)
        return (float(raw) if "." in raw else int(raw)), m.end()
    if s.startswith("true", pos):
        return True, pos + 4
    if s.startswith("false", pos):
        return False, pos + 5
    raise BadExpression(original, pos)


def eval_condition(cond: Condition, variables: dict) -> tuple[bool, Optional[str]]:
    """Returns (result, problem). problem is a log-worthy reason the
    condition degraded to false, or None for a clean evaluation."""
    if cond.variable not in variables:
        return False, f"variable {cond.variable!r} missing"
    value = variables[cond.variable]
    if cond.op is None:
        if isinstance(value, bool):
            return value, None
        return False, f"variable {cond.variable!r} is not boolean"
    if not _comparable(value, cond.literal):
        return False, (f"type mismatch: {cond.variable!r}={value!r} "
                       f"vs literal {cond.literal!r}")
    result = value == cond.literal
    if cond.op == "!=":
        result = not result
    return result, None


def _comparable(a, b) -> bool:
    if isinstance(a, bool) or isinstance(b, bool):
        return isinstance(a, bool) and isinstance(b, bool)
    if isinstance(a, (int, float)) and isinstance(b, (int, float)):
        return True
    return isinstance(a, str) and isinstance(b, str)
