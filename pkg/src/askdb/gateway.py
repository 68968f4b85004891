"""Chat-completion gateway with transcript recording and deterministic replay.

Three modes:

* ``live``   — POST to a chat-completions endpoint, nothing persisted.
* ``record`` — live call, response appended to a JSON Lines transcript.
* ``replay`` — responses served from the transcript by request digest, FIFO
  per digest so repeated identical requests replay in order; no network.

Every test in this package runs against ``record``/``replay``; the live path
is exercised only against a real endpoint configured via ``LLM_API_BASE``,
``LLM_API_KEY``, and ``LLM_MODEL_ID``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import requests

from .errors import ConfigError, ReplayMiss, ServiceError, TransportError

logger = logging.getLogger(__name__)

DEFAULT_TEMPERATURE = 0.0
# Preset for hosted models that degenerate at exactly zero.
LOW_TEMPERATURE_PRESET = 0.1

_VALID_ROLES = ("system", "user", "assistant")


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str


@dataclass(frozen=True)
class CompletionRequest:
    model_id: str
    messages: tuple[ChatMessage, ...]
    temperature: float
    max_tokens: int | None = None


@dataclass(frozen=True)
class CompletionResponse:
    text: str
    token_usage: tuple[int, int] | None = None  # (prompt_tokens, completion_tokens)


def _validate(req: CompletionRequest) -> None:
    if not req.messages:
        raise ConfigError("completion request has no messages")
    if not 0.0 <= req.temperature <= 2.0:
        raise ConfigError(f"temperature {req.temperature} outside [0, 2]")
    for msg in req.messages:
        if msg.role not in _VALID_ROLES:
            raise ConfigError(f"invalid message role: {msg.role}")
        if msg.content is None:
            raise ConfigError("message content must not be null")


def digest(req: CompletionRequest) -> str:
    """Stable content hash of (model_id, messages, temperature).

    Deliberately insensitive to max_tokens so generation-length tweaks do not
    invalidate recorded transcripts.
    """
    canonical = json.dumps(
        {
            "model": req.model_id,
            "temperature": float(req.temperature),
            "messages": [[m.role, m.content] for m in req.messages],
        },
        sort_keys=True,
        ensure_ascii=False,
        separators=(",", ":"),
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _summarize(req: CompletionRequest) -> str:
    last = req.messages[-1].content
    head = last[:80].replace("\n", " ")
    return f"{req.model_id} t={req.temperature} msgs={len(req.messages)} | {head}"


class Transcript:
    """Digest-keyed FIFO store of recorded responses."""

    def __init__(self) -> None:
        self.entries: dict[str, list[str]] = {}

    @classmethod
    def load(cls, path: str | Path) -> "Transcript":
        transcript = cls()
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                record = json.loads(line)
                transcript.add(record["digest"], record["response_text"])
        return transcript

    def add(self, request_digest: str, response_text: str) -> None:
        self.entries.setdefault(request_digest, []).append(response_text)

    def pop(self, request_digest: str) -> str:
        queue = self.entries.get(request_digest)
        if not queue:
            raise ReplayMiss(request_digest)
        return queue.pop(0)

    def __len__(self) -> int:
        return sum(len(q) for q in self.entries.values())


class HttpTransport:
    """Default transport: the de-facto chat-completions HTTP/JSON interface."""

    def __init__(self, api_base: str, api_key: str = "", timeout: float = 60.0):
        self.api_base = api_base.rstrip("/")
        self.api_key = api_key
        self.timeout = timeout

    def __call__(self, req: CompletionRequest) -> CompletionResponse:
        body: dict = {
            "model": req.model_id,
            "messages": [{"role": m.role, "content": m.content} for m in req.messages],
            "temperature": req.temperature,
        }
        if req.max_tokens is not None:
            body["max_tokens"] = req.max_tokens
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = requests.post(
                f"{self.api_base}/chat/completions",
                json=body,
                headers=headers,
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise TransportError(str(exc)) from exc
        if resp.status_code // 100 != 2:
            raise ServiceError(resp.status_code, resp.text)
        data = resp.json()
        text = data["choices"][0]["message"]["content"]
        usage = data.get("usage")
        token_usage = None
        if usage:
            token_usage = (usage.get("prompt_tokens", 0), usage.get("completion_tokens", 0))
        return CompletionResponse(text=text, token_usage=token_usage)


class LlmGateway:
    """Uniform completion interface; safe for concurrent use."""

    def __init__(
        self,
        mode: str = "replay",
        *,
        model_id: str | None = None,
        temperature: float = DEFAULT_TEMPERATURE,
        transcript_path: str | Path | None = None,
        transport: Callable[[CompletionRequest], CompletionResponse] | None = None,
        api_base: str | None = None,
        api_key: str | None = None,
        max_retries: int = 2,
        retry_base_delay: float = 0.5,
        default_max_tokens: int | None = None,
    ):
        if mode not in ("live", "record", "replay"):
            raise ConfigError(f"unknown gateway mode: {mode}")
        self.mode = mode
        self.model_id = model_id or os.environ.get("LLM_MODEL_ID", "gpt-4")
        self.temperature = temperature
        self.transcript_path = Path(transcript_path) if transcript_path else None
        self.max_retries = max_retries
        self.retry_base_delay = retry_base_delay
        self.default_max_tokens = default_max_tokens
        self._lock = threading.Lock()

        if mode == "replay":
            if self.transcript_path is None:
                self.transcript = Transcript()
            else:
                self.transcript = Transcript.load(self.transcript_path)
            self._transport = None
        else:
            self.transcript = Transcript()
            if transport is not None:
                self._transport = transport
            else:
                base = api_base or os.environ.get("LLM_API_BASE")
                if not base:
                    raise ConfigError("live/record mode needs api_base or LLM_API_BASE")
                key = api_key if api_key is not None else os.environ.get("LLM_API_KEY", "")
                self._transport = HttpTransport(base, key)
            if mode == "record" and self.transcript_path is None:
                raise ConfigError("record mode needs a transcript path")

    def ask(self, prompt: str, *, system: str | None = None) -> CompletionResponse:
        """Build a request from gateway defaults and complete it.

        By default the prompt travels as a single user message with no system
        message; pass ``system`` to prepend one.
        """
        messages: list[ChatMessage] = []
        if system is not None:
            messages.append(ChatMessage("system", system))
        messages.append(ChatMessage("user", prompt))
        req = CompletionRequest(
            model_id=self.model_id,
            messages=tuple(messages),
            temperature=self.temperature,
            max_tokens=self.default_max_tokens,
        )
        return self.complete(req)

    def complete(self, req: CompletionRequest) -> CompletionResponse:
        _validate(req)
        if self.mode == "replay":
            with self._lock:
                text = self.transcript.pop(digest(req))
            return CompletionResponse(text=text)
        response = self._complete_with_retries(req)
        if self.mode == "record":
            self._record(req, response)
        return response

    def _complete_with_retries(self, req: CompletionRequest) -> CompletionResponse:
        delay = self.retry_base_delay
        for attempt in range(self.max_retries + 1):
            try:
                return self._transport(req)
            except TransportError:
                if attempt == self.max_retries:
                    raise
                logger.warning("transport error, retrying in %.1fs", delay)
                time.sleep(delay)
                delay *= 2
        raise AssertionError("unreachable")

    def _record(self, req: CompletionRequest, response: CompletionResponse) -> None:
        line = json.dumps(
            {
                "digest": digest(req),
                "request_summary": _summarize(req),
                "response_text": response.text,
            },
            ensure_ascii=False,
        )
        with self._lock:
            self.transcript.add(digest(req), response.text)
            with open(self.transcript_path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")


@dataclass
class UsageTracker:
    """Wraps a gateway to sum token usage and call counts for one question."""

    inner: LlmGateway
    calls: int = 0
    prompt_tokens: int = 0
    completion_tokens: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def ask(self, prompt: str, *, system: str | None = None) -> CompletionResponse:
        response = self.inner.ask(prompt, system=system)
        with self._lock:
            self.calls += 1
            if response.token_usage is not None:
                self.prompt_tokens += response.token_usage[0]
                self.completion_tokens += response.token_usage[1]
        return response

    def totals(self) -> dict[str, int]:
        return {
            "calls": self.calls,
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
        }
