"""Agent backends: a chat-completions HTTP client and the scripted shell.

A backend turns (system prompt, history, tools) into a :class:`Reply`.
Scripted policies are generators: they ``yield`` a Reply and receive the
tool results for it (a list of JSON strings) back from ``send``.
"""

from __future__ import annotations

import json
import os
import time
from typing import Callable, Generator, Protocol, Sequence

import httpx

from .messages import AgentError, ChatMessage, Reply, ToolCall, ToolSpec


class AgentBackend(Protocol):
    def step(self, system: str, messages: Sequence[ChatMessage], tools: Sequence[ToolSpec]) -> Reply:
        ...


class BackendError(AgentError):
    """Transport or protocol failure; ``raw`` holds the response body if any."""

    def __init__(self, message: str, raw: str | None = None, status: int | None = None):
        super().__init__(message if raw is None else f"{message}; raw body: {raw}")
        self.raw = raw
        self.status = status


class BackendTimeout(BackendError):
    pass


class MalformedResponse(BackendError):
    pass


# -- remote --------------------------------------------------------------


def wire_messages(system: str, messages: Sequence[ChatMessage]) -> list[dict]:
    out = [{"role": "system", "content": system}]
    for m in messages:
        if m.role == "assistant" and m.tool_calls:
            out.append({
                "role": "assistant",
                "content": m.content or None,
                "tool_calls": [
                    {"id": c.call_id, "type": "function",
                     "function": {"name": c.name,
                                  "arguments": json.dumps(dict(c.arguments), sort_keys=True)}}
                    for c in m.tool_calls
                ],
            })
        elif m.role == "tool":
            out.append({"role": "tool", "tool_call_id": m.tool_call_id, "content": m.content})
        else:
            out.append({"role": m.role, "content": m.content})
    return out


def parse_completion(raw: str) -> Reply:
    try:
        body = json.loads(raw)
        message = body["choices"][0]["message"]
    except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
        raise MalformedResponse(f"cannot read choices[0].message ({exc.__class__.__name__})", raw) from None
    if not isinstance(message, dict):
        raise MalformedResponse("choices[0].message is not an object", raw)
    calls = []
    for i, tc in enumerate(message.get("tool_calls") or []):
        try:
            fn = tc["function"]
            args = fn.get("arguments") or {}
            if isinstance(args, str):
                args = json.loads(args) if args.strip() else {}
            if not isinstance(args, dict):
                raise TypeError("arguments must be an object")
            calls.append(ToolCall(fn["name"], args, tc.get("id") or f"call_{i}"))
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise MalformedResponse(f"bad tool call #{i}: {exc}", raw) from None
    content = message.get("content") or ""
    if not isinstance(content, str):
        raise MalformedResponse("message content is not text", raw)
    return Reply(content, tuple(calls))


class RemoteBackend:
    """Blocking client for any chat-completions compatible endpoint."""

    def __init__(self, endpoint: str, model: str, api_key_env: str | None = "AGENTFE_API_KEY",
                 timeout: float = 60.0, retries: int = 3, backoff: float = 0.5,
                 sleep: Callable[[float], None] = time.sleep,
                 transport: httpx.BaseTransport | None = None):
        self.endpoint = endpoint
        self.model = model
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self._sleep = sleep
        self._client = httpx.Client(timeout=timeout, transport=transport)
        self.requests_sent = 0

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env) if self.api_key_env else None
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def post(self, payload: dict) -> str:
        last: BackendError | None = None
        for attempt in range(self.retries + 1):
            if attempt:
                self._sleep(self.backoff * 2 ** (attempt - 1))
            self.requests_sent += 1
            try:
                resp = self._client.post(self.endpoint, json=payload, headers=self._headers())
            except httpx.TimeoutException as exc:
                last = BackendTimeout(f"request timed out after {self.timeout}s: {exc}")
                continue
            except httpx.TransportError as exc:
                last = BackendError(f"transport error: {exc}")
                continue
            if resp.status_code >= 500:
                last = BackendError(f"server error {resp.status_code}", resp.text, resp.status_code)
                continue
            if resp.status_code >= 400:
                raise BackendError(f"request rejected with {resp.status_code}", resp.text, resp.status_code)
            return resp.text
        assert last is not None
        raise last

    def step(self, system: str, messages: Sequence[ChatMessage], tools: Sequence[ToolSpec]) -> Reply:
        payload = {"model": self.model, "messages": wire_messages(system, messages)}
        if tools:
            payload["tools"] = [t.wire() for t in tools]
        return parse_completion(self.post(payload))

    def complete(self, system: str, user: str) -> str:
        return self.step(system, [ChatMessage("user", user)], []).content

    def close(self) -> None:
        self._client.close()


# -- scripted ------------------------------------------------------------

Policy = Callable[[str, dict], Generator[Reply, list[str], None]]


class ScriptedBackend:
    """Drives a deterministic policy generator; one generator per episode.

    A new episode starts whenever the history holds only the opening user
    message. The policy sees nothing but that message and tool results.
    """

    def __init__(self, role: str, policy: Policy, params: dict | None = None, seed: int = 0):
        self.role = role
        self.policy = policy
        self.params = dict(params or {})
        self.params.setdefault("seed", seed)
        self.seed = seed
        self._gen: Generator | None = None

    def step(self, system: str, messages: Sequence[ChatMessage], tools: Sequence[ToolSpec]) -> Reply:
        if len(messages) == 1:
            self._gen = self.policy(messages[0].content, self.params)
            return self._advance(None)
        if self._gen is None:
            raise AgentError("scripted backend resumed without an open episode")
        results = []
        for m in reversed(messages):
            if m.role != "tool":
                break
            results.append(m.content)
        return self._advance(list(reversed(results)))

    def _advance(self, results) -> Reply:
        try:
            reply = next(self._gen) if results is None else self._gen.send(results)
        except StopIteration:
            self._gen = None
            return Reply("done")
        if reply.is_final:
            self._gen = None
        return reply
