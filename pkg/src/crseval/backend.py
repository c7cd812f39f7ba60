"""Text-generation backends: an OpenAI-compatible HTTP client and a scripted mock.

Every completion attempt (including retries) is appended to the backend's
call log, which can be exported as line-delimited JSON for audits.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import requests

from .errors import ConfigError

logger = logging.getLogger(__name__)

# Callers that parse structured output (NLU, judging) default to greedy
# decoding; free-text generation keeps some temperature.
DEFAULT_PARSE_TEMPERATURE = 0.0
DEFAULT_GENERATION_TEMPERATURE = 0.7

_TRANSIENT_STATUSES = frozenset({429})


class BackendError(Exception):
    """The backend failed to produce a completion (after exhausting retries)."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class ScriptExhausted(BackendError):
    """A mock backend ran out of scripted replies."""


class BackendKind(str, Enum):
    HTTP_CHAT = "HTTP_CHAT"
    MOCK = "MOCK"


@dataclass(frozen=True)
class GenerationRequest:
    prompt: str
    max_tokens: int = 256
    temperature: float = 0.0
    stop_sequences: tuple[str, ...] = ()
    tag: str = ""

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        object.__setattr__(self, "stop_sequences", tuple(self.stop_sequences))


@dataclass(frozen=True)
class GenerationResponse:
    text: str
    backend_id: str
    latency: float
    token_counts: tuple[int, int] | None = None


@dataclass(frozen=True)
class BackendConfig:
    kind: BackendKind
    base_url: str | None = None
    model_name: str | None = None
    api_key_env_var: str | None = None
    timeout: float = 30.0
    max_retries: int = 2
    backoff_base: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "kind", BackendKind(self.kind))
        if self.kind is BackendKind.HTTP_CHAT:
            if not self.base_url or not self.model_name:
                raise ConfigError("HTTP_CHAT backends require base_url and model_name")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")


@dataclass(frozen=True)
class CallLogEntry:
    tag: str
    attempt: int
    prompt_digest: str
    prompt_chars: int
    outcome: str
    status: int | None = None

    def to_obj(self) -> dict[str, Any]:
        return {
            "tag": self.tag,
            "attempt": self.attempt,
            "prompt_digest": self.prompt_digest,
            "prompt_chars": self.prompt_chars,
            "outcome": self.outcome,
            "status": self.status,
        }


def _prompt_digest(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:12]


class TextBackend:
    """Base class holding the thread-safe call log."""

    backend_id: str = "backend"

    def __init__(self):
        self._log_lock = threading.Lock()
        self.call_log: list[CallLogEntry] = []

    def _log(self, request: GenerationRequest, attempt: int, outcome: str, status: int | None = None) -> None:
        entry = CallLogEntry(
            tag=request.tag,
            attempt=attempt,
            prompt_digest=_prompt_digest(request.prompt),
            prompt_chars=len(request.prompt),
            outcome=outcome,
            status=status,
        )
        with self._log_lock:
            self.call_log.append(entry)

    def export_call_log(self, path: str | Path) -> None:
        with self._log_lock:
            lines = [json.dumps(entry.to_obj(), ensure_ascii=False) for entry in self.call_log]
        Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")

    def complete(self, request: GenerationRequest) -> GenerationResponse:
        raise NotImplementedError


class HttpChatBackend(TextBackend):
    """POSTs to ``{base_url}/chat/completions`` with the prompt as one user message.

    Transient failures (network errors, 429, 5xx) are retried up to
    ``max_retries`` times with exponential backoff; other statuses fail
    immediately.
    """

    def __init__(self, config: BackendConfig):
        super().__init__()
        if config.kind is not BackendKind.HTTP_CHAT:
            raise ConfigError(f"expected HTTP_CHAT config, got {config.kind}")
        self.config = config
        self.backend_id = f"http:{config.model_name}"

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.config.api_key_env_var:
            key = os.environ.get(self.config.api_key_env_var)
            if not key:
                raise ConfigError(
                    f"environment variable {self.config.api_key_env_var!r} is not set"
                )
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _body(self, request: GenerationRequest) -> dict[str, Any]:
        return {
            "model": self.config.model_name,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
            "stop": list(request.stop_sequences),
        }

    def complete(self, request: GenerationRequest) -> GenerationResponse:
        url = self.config.base_url.rstrip("/") + "/chat/completions"
        headers = self._headers()
        body = self._body(request)
        attempts = self.config.max_retries + 1
        last_error: str = "no attempt made"
        last_status: int | None = None
        for attempt in range(1, attempts + 1):
            started = time.monotonic()
            try:
                response = requests.post(url, json=body, headers=headers, timeout=self.config.timeout)
            except requests.RequestException as exc:
                last_error = f"transport error: {exc}"
                last_status = None
                self._log(request, attempt, "transport_error")
            else:
                latency = time.monotonic() - started
                last_status = response.status_code
                if response.status_code == 200:
                    try:
                        payload = response.json()
                        text = payload["choices"][0]["message"]["content"]
                        usage = payload.get("usage") or {}
                        token_counts = None
                        if "prompt_tokens" in usage and "completion_tokens" in usage:
                            token_counts = (int(usage["prompt_tokens"]), int(usage["completion_tokens"]))
                    except (ValueError, KeyError, IndexError, TypeError) as exc:
                        self._log(request, attempt, "bad_payload", status=200)
                        raise BackendError(f"malformed completion payload: {exc}", status=200) from exc
                    self._log(request, attempt, "ok", status=200)
                    return GenerationResponse(
                        text=str(text),
                        backend_id=self.backend_id,
                        latency=latency,
                        token_counts=token_counts,
                    )
                transient = response.status_code in _TRANSIENT_STATUSES or response.status_code >= 500
                self._log(request, attempt, "http_error", status=response.status_code)
                last_error = f"HTTP {response.status_code}"
                if not transient:
                    raise BackendError(last_error, status=response.status_code)
            if attempt < attempts:
                time.sleep(self.config.backoff_base * (2 ** (attempt - 1)))
        raise BackendError(f"{last_error} after {attempts} attempts", status=last_status)


@dataclass
class _ScriptEntry:
    matcher: str | None
    reply: str
    consumed: bool = False


class MockBackend(TextBackend):
    """Deterministic scripted backend for tests and offline runs.

    Each completion consumes the first unconsumed entry whose matcher is a
    substring of the prompt (entries without a matcher match anything).
    Running out of matching entries raises :class:`ScriptExhausted`.
    """

    def __init__(self, script: Iterable[tuple[str | None, str] | str], backend_id: str = "mock"):
        super().__init__()
        self.backend_id = backend_id
        self._entries: list[_ScriptEntry] = []
        for entry in script:
            if isinstance(entry, str):
                self._entries.append(_ScriptEntry(None, entry))
            else:
                matcher, reply = entry
                self._entries.append(_ScriptEntry(matcher, reply))
        self._script_lock = threading.Lock()

    def complete(self, request: GenerationRequest) -> GenerationResponse:
        with self._script_lock:
            for entry in self._entries:
                if entry.consumed:
                    continue
                if entry.matcher is not None and entry.matcher not in request.prompt:
                    continue
                entry.consumed = True
                self._log(request, 1, "ok")
                return GenerationResponse(text=entry.reply, backend_id=self.backend_id, latency=0.0)
        self._log(request, 1, "script_exhausted")
        raise ScriptExhausted(f"no scripted reply left for tag {request.tag!r}")


def make_mock_backend(script: Iterable[tuple[str | None, str] | str]) -> MockBackend:
    return MockBackend(script)


def backend_config_from_obj(obj: Mapping[str, Any]) -> BackendConfig:
    try:
        return BackendConfig(
            kind=BackendKind(obj["kind"]),
            base_url=obj.get("base_url"),
            model_name=obj.get("model_name"),
            api_key_env_var=obj.get("api_key_env_var"),
            timeout=float(obj.get("timeout", 30.0)),
            max_retries=int(obj.get("max_retries", 2)),
            backoff_base=float(obj.get("backoff_base", 0.5)),
        )
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"invalid backend config: {exc}") from exc


def backend_from_config(config: BackendConfig | Mapping[str, Any], script: Sequence | None = None) -> TextBackend:
    """Instantiate a backend; MOCK configs take their script from ``script``
    or from a ``script`` key of the raw config object."""
    raw_script: Sequence | None = script
    if isinstance(config, Mapping):
        if raw_script is None and "script" in config:
            raw_script = [
                (entry.get("matcher"), entry["reply"]) if isinstance(entry, Mapping) else entry
                for entry in config["script"]
            ]
        config = backend_config_from_obj(config)
    if config.kind is BackendKind.HTTP_CHAT:
        return HttpChatBackend(config)
    return MockBackend(raw_script or [])


def load_backend(path: str | Path) -> TextBackend:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load backend config {path}: {exc}") from exc
    return backend_from_config(obj)
