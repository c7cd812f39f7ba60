"""Shared fixtures: item catalog, taxonomy configs, and a local HTTP stub."""

from __future__ import annotations

import json
import threading
from collections import deque
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest

from crseval import (
    InteractionModelConfig,
    build_interaction_model,
    load_item_collection,
    load_template_store,
)

REPO_ROOT = Path(__file__).resolve().parent.parent
CONFIG_DIR = REPO_ROOT / "configs"
DATA_DIR = REPO_ROOT / "data"
FIXTURE_DIR = Path(__file__).resolve().parent / "fixtures"


class _StubHandler(BaseHTTPRequestHandler):
    def _serve(self):
        length = int(self.headers.get("Content-Length", 0) or 0)
        raw = self.rfile.read(length) if length else b""
        try:
            body = json.loads(raw) if raw else None
        except json.JSONDecodeError:
            body = raw.decode("utf-8", errors="replace")
        self.server.stub.requests.append(
            {
                "method": self.command,
                "path": self.path,
                "headers": dict(self.headers.items()),
                "body": body,
            }
        )
        status, payload = self.server.stub.next_response()
        data = payload if isinstance(payload, bytes) else json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    do_POST = _serve
    do_GET = _serve

    def log_message(self, *args):
        pass


class HttpStub:
    """Scriptable local HTTP endpoint recording every request it sees."""

    def __init__(self):
        self._httpd = ThreadingHTTPServer(("127.0.0.1", 0), _StubHandler)
        self._httpd.stub = self
        self.requests: list[dict] = []
        self._queue: deque[tuple[int, object]] = deque()
        self.default_response: tuple[int, object] = (200, {})
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()

    @property
    def url(self) -> str:
        host, port = self._httpd.server_address
        return f"http://{host}:{port}"

    def enqueue(self, status: int, payload) -> None:
        self._queue.append((status, payload))

    def next_response(self) -> tuple[int, object]:
        return self._queue.popleft() if self._queue else self.default_response

    def close(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        self._thread.join(timeout=5)


def chat_payload(text: str, prompt_tokens: int | None = None, completion_tokens: int | None = None):
    payload = {"choices": [{"message": {"role": "assistant", "content": text}}]}
    if prompt_tokens is not None and completion_tokens is not None:
        payload["usage"] = {
            "prompt_tokens": prompt_tokens,
            "completion_tokens": completion_tokens,
        }
    return payload


@pytest.fixture
def http_stub():
    stub = HttpStub()
    yield stub
    stub.close()


@pytest.fixture(scope="session")
def music_collection():
    return load_item_collection(DATA_DIR / "items_music.json")


@pytest.fixture(scope="session")
def default_model_config():
    return InteractionModelConfig.from_json_file(CONFIG_DIR / "interaction_model_default.json")


@pytest.fixture(scope="session")
def default_model(default_model_config):
    return build_interaction_model([], default_model_config)


@pytest.fixture(scope="session")
def template_store():
    return load_template_store(CONFIG_DIR / "templates_default.json")
