"""Chat-completion gateway with per-role model routing.

Three interchangeable backends:

- provider: plain HTTP chat-completion client (endpoint + key from config).
- scripted: canned exchanges consumed in file order per role; each entry's
  matcher must occur in the rendered request, so a drifting prompt fails
  the run loudly instead of silently replying out of order.
- record/replay: tee live exchanges to YAML, then serve them back.

Every test and demo in this repository runs on the scripted backend, which
makes whole conversations reproducible byte for byte.
"""

from __future__ import annotations

import os
import threading
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import yaml

from .config import LLMConfig

Message = dict[str, str]  # {"role": system|user|assistant, "content": ...}

PLANNER_ROLE = "Planner"
CODEGEN_ROLE = "CodeGenerator"
DISTILLER_ROLE = "ExperienceDistiller"
EXAMINER_ROLE = "Examiner"
JUDGE_ROLE = "Judge"


class GatewayError(Exception):
    pass


class ScriptMismatch(GatewayError):
    def __init__(self, role: str, expected: str, got: str):
        super().__init__(
            f"scripted backend for role {role!r} expected a request containing "
            f"{expected!r}, got:\n{got}"
        )
        self.expected = expected
        self.got = got


class ReplayExhausted(GatewayError):
    pass


def render_request(messages: list[Message]) -> str:
    """Canonical text of a request, used for matching and recording."""
    return "\n".join(m.get("content", "") for m in messages)


@dataclass
class ScriptedExchange:
    role: str
    matcher: str
    reply: str


class Backend(Protocol):
    def complete(self, role: str, model: str, messages: list[Message], **params) -> str: ...


class ScriptedBackend:
    def __init__(self, exchanges: list[ScriptedExchange]):
        self._queues: dict[str, list[ScriptedExchange]] = {}
        for ex in exchanges:
            self._queues.setdefault(ex.role, []).append(ex)
        self._lock = threading.Lock()

    @classmethod
    def from_yaml(cls, path: str | Path) -> "ScriptedBackend":
        raw = yaml.safe_load(Path(path).read_text()) or []
        return cls(
            [
                ScriptedExchange(
                    role=str(e["role"]), matcher=str(e.get("matcher", "")), reply=str(e["reply"])
                )
                for e in raw
            ]
        )

    def complete(self, role: str, model: str, messages: list[Message], **params) -> str:
        request = render_request(messages)
        with self._lock:
            queue = self._queues.get(role, [])
            if not queue:
                raise ReplayExhausted(f"no scripted replies left for role {role!r}")
            exchange = queue[0]
            if exchange.matcher and exchange.matcher not in request:
                raise ScriptMismatch(role, exchange.matcher, request)
            queue.pop(0)
        return exchange.reply

    def pending(self) -> int:
        return sum(len(q) for q in self._queues.values())


class ProviderBackend:
    """Minimal chat-completion HTTP client (OpenAI-style wire shape)."""

    def __init__(self, endpoint: str, api_key_env: str = "LLM_API_KEY", client=None):
        import httpx

        self.endpoint = endpoint.rstrip("/")
        self.api_key = os.environ.get(api_key_env, "")
        self._client = client or httpx.Client(timeout=120.0)

    def complete(self, role: str, model: str, messages: list[Message], **params) -> str:
        body = {"model": model, "messages": messages}
        body.update(params)
        try:
            response = self._client.post(
                f"{self.endpoint}/chat/completions",
                json=body,
                headers={"Authorization": f"Bearer {self.api_key}"},
            )
            response.raise_for_status()
            payload = response.json()
            return payload["choices"][0]["message"]["content"]
        except GatewayError:
            raise
        except Exception as exc:
            raise GatewayError(f"provider call failed for role {role}: {exc}") from exc


class RecordingBackend:
    """Tees every exchange through ``inner`` into a YAML sink."""

    def __init__(self, inner: Backend, sink: str | Path):
        self.inner = inner
        self.sink = Path(sink)
        self._entries: list[dict] = []
        self._lock = threading.Lock()

    def complete(self, role: str, model: str, messages: list[Message], **params) -> str:
        reply = self.inner.complete(role, model, messages, **params)
        with self._lock:
            self._entries.append(
                {"role": role, "request": render_request(messages), "reply": reply}
            )
            self.sink.write_text(
                yaml.safe_dump(self._entries, sort_keys=False, allow_unicode=True)
            )
        return reply


def replay_backend(source: str | Path) -> ScriptedBackend:
    """Serve a recorded YAML transcript back as a scripted backend.

    The recorded request text doubles as the matcher, so replay also checks
    that the framework renders the same requests it did when recording.
    """
    raw = yaml.safe_load(Path(source).read_text()) or []
    return ScriptedBackend(
        [
            ScriptedExchange(
                role=str(e["role"]), matcher=str(e.get("request", "")), reply=str(e["reply"])
            )
            for e in raw
        ]
    )


@dataclass
class Gateway:
    """Role-aware entry point: resolves the model per role, counts calls."""

    config: LLMConfig
    backend: Backend
    calls: Counter = field(default_factory=Counter)

    def complete(self, role: str, messages: list[Message]) -> str:
        entry = self.config.resolve(role)
        self.calls[role] += 1
        return self.backend.complete(
            role,
            entry.model,
            messages,
            temperature=entry.temperature,
            max_tokens=entry.max_tokens,
        )

    def total_calls(self) -> int:
        return sum(self.calls.values())


def build_gateway(config: LLMConfig, record_to: str | Path | None = None) -> Gateway:
    backend: Backend
    if config.backend == "scripted":
        if not config.script:
            raise GatewayError("scripted backend requires llm.script")
        backend = ScriptedBackend.from_yaml(config.script)
    elif config.backend == "replay":
        if not config.script:
            raise GatewayError("replay backend requires llm.script")
        backend = replay_backend(config.script)
    elif config.backend == "provider":
        backend = ProviderBackend(config.endpoint, config.api_key_env)
    else:
        raise GatewayError(f"unknown llm backend: {config.backend}")
    if record_to is not None:
        backend = RecordingBackend(backend, record_to)
    return Gateway(config=config, backend=backend)
