"""Chat messages, tool specs, scratch pads and focus areas."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Any, Callable, Literal, Mapping

Role = Literal["system", "user", "assistant", "tool"]
EXPLORATORY = "exploratory"
EXPLOITIVE = "exploitive"
SCOPES = (EXPLORATORY, EXPLOITIVE)


class AgentError(RuntimeError):
    pass


@dataclass(frozen=True)
class ToolCall:
    name: str
    arguments: Mapping[str, Any]
    call_id: str = ""

    def as_dict(self) -> dict:
        return {"id": self.call_id, "name": self.name, "arguments": dict(self.arguments)}


@dataclass(frozen=True)
class ChatMessage:
    role: Role
    content: str = ""
    tool_calls: tuple[ToolCall, ...] = ()
    tool_call_id: str | None = None

    def __post_init__(self):
        if self.role == "tool" and not self.tool_call_id:
            raise AgentError("tool messages must reference the call they answer")
        if self.tool_calls and self.role != "assistant":
            raise AgentError("only assistant messages carry tool calls")


@dataclass(frozen=True)
class Reply:
    """One backend step: either text (final answer) or one or more tool calls."""

    content: str = ""
    tool_calls: tuple[ToolCall, ...] = ()

    @property
    def is_final(self) -> bool:
        return not self.tool_calls


@dataclass(frozen=True)
class ToolSpec:
    name: str
    description: str
    parameters: Mapping[str, tuple[str, bool]]  # arg -> (json type, required)

    def json_schema(self) -> dict:
        props = {}
        for arg, (kind, _) in self.parameters.items():
            props[arg] = {"type": kind}
            if kind == "array":
                props[arg]["items"] = {"type": "string"}
        return {
            "type": "object",
            "properties": props,
            "required": [a for a, (_, req) in self.parameters.items() if req],
        }

    def wire(self) -> dict:
        return {"type": "function",
                "function": {"name": self.name, "description": self.description,
                             "parameters": self.json_schema()}}


_JSON_TYPES = {"string": str, "integer": int, "number": (int, float), "boolean": bool,
               "array": list, "object": dict}


class ToolRegistry:
    def __init__(self):
        self._specs: dict[str, ToolSpec] = {}
        self._handlers: dict[str, Callable[..., Any]] = {}

    def register(self, spec: ToolSpec, handler: Callable[..., Any]) -> None:
        if spec.name in self._specs:
            raise AgentError(f"tool {spec.name!r} registered twice")
        self._specs[spec.name] = spec
        self._handlers[spec.name] = handler

    @property
    def specs(self) -> list[ToolSpec]:
        return list(self._specs.values())

    def names(self) -> list[str]:
        return list(self._specs)

    def call(self, call: ToolCall) -> tuple[str, bool]:
        """Run a tool; returns (JSON result text, ok). Bad calls become error results."""
        spec = self._specs.get(call.name)
        if spec is None:
            return _error(f"unknown tool {call.name!r}; available: {', '.join(self._specs)}"), False
        args = dict(call.arguments)
        for arg, (kind, required) in spec.parameters.items():
            if arg not in args:
                if required:
                    return _error(f"missing required argument {arg!r}"), False
                continue
            if not isinstance(args[arg], _JSON_TYPES[kind]) or (
                kind in ("integer", "number") and isinstance(args[arg], bool)
            ):
                return _error(f"argument {arg!r} must be of type {kind}"), False
        unknown = set(args) - set(spec.parameters)
        if unknown:
            return _error(f"unexpected arguments: {sorted(unknown)}"), False
        try:
            result = self._handlers[call.name](**args)
        except ToolFailure as exc:
            return _error(str(exc)), False
        return json.dumps(result, sort_keys=True, ensure_ascii=False, allow_nan=False,
                          default=_jsonable), True


class ToolFailure(Exception):
    """Raised by tool handlers for errors that go back to the agent as results."""


def _jsonable(value):
    if hasattr(value, "item"):
        return value.item()
    raise TypeError(f"not JSON serializable: {type(value).__name__}")


def _error(message: str) -> str:
    return json.dumps({"error": message}, ensure_ascii=False)


@dataclass(frozen=True)
class Note:
    iteration: int
    seq: int
    text: str


@dataclass
class ScratchPad:
    """Append-only notes. Timestamps are logical: (iteration, sequence number)."""

    owner: str
    notes: list[Note] = field(default_factory=list)

    def add(self, iteration: int, text: str) -> Note:
        if not text.strip():
            raise ToolFailure("note text is empty")
        note = Note(iteration, len(self.notes), text)
        self.notes.append(note)
        return note

    def as_list(self) -> list[dict]:
        return [{"iteration": n.iteration, "seq": n.seq, "text": n.text} for n in self.notes]

    def dumps(self) -> str:
        return "".join(json.dumps(d, ensure_ascii=False) + "\n" for d in self.as_list())


@dataclass(frozen=True)
class FocusArea:
    text: str
    scope: str
    iteration: int

    def __post_init__(self):
        if not self.text.strip():
            raise AgentError("focus text must be non-empty")
        if self.scope not in SCOPES:
            raise AgentError(f"scope must be one of {SCOPES}, got {self.scope!r}")


_FOCUS_RE = re.compile(r"^\s*\**focus\**\s*:\s*\**\s*(.+?)\s*\**\s*$", re.I | re.M)
_SCOPE_RE = re.compile(r"^\s*\**scope\**\s*:\s*\**\s*(\w+)", re.I | re.M)


def parse_focus(answer: str, iteration: int, default_scope: str = EXPLORATORY) -> FocusArea | None:
    """Read "Focus: ..." and "Scope: ..." lines; bare text falls back to its first paragraph."""
    text = answer.strip()
    if not text:
        return None
    m = _FOCUS_RE.search(text)
    focus = m.group(1) if m else text.split("\n\n")[0].strip()
    scope = default_scope
    s = _SCOPE_RE.search(text)
    if s:
        word = s.group(1).lower()
        if word.startswith("exploit"):
            scope = EXPLOITIVE
        elif word.startswith("explor"):
            scope = EXPLORATORY
    elif re.search(r"\bexploit(ive|ative)\b", text, re.I):
        scope = EXPLOITIVE
    return FocusArea(focus, scope, iteration)


def render_focus(focus: FocusArea, reason: str = "") -> str:
    lines = [f"Focus: {focus.text}", f"Scope: {focus.scope}"]
    if reason:
        lines.append(f"Reason: {reason}")
    return "\n".join(lines)
