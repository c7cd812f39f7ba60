"""Connectors that treat the system under evaluation as a black box.

Only a text request goes in and only a text reply comes out.  Besides the
HTTP connector there are two offline stand-ins: a scripted agent with a
fixed reply list and a cooperative rule-based agent that elicits, answers
inquiries, recommends one item, and then acknowledges; the mocks speak
canonical act strings so a deterministic NLU can read them.
"""

from __future__ import annotations

import json
import logging
import uuid
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Mapping, Sequence

import requests

from .dialogue import DialogueAct, Utterance, serialize_dialogue_acts
from .errors import ConfigError

logger = logging.getLogger(__name__)


class ConnectorError(Exception):
    """The agent could not be reached or produced an unusable response."""


class EmptyReply(ConnectorError):
    """The agent reply carried no text."""


class ConnectorKind(str, Enum):
    HTTP = "HTTP"
    SCRIPTED = "SCRIPTED"
    RULE_BASED = "RULE_BASED"


@dataclass(frozen=True)
class AgentReply:
    text: str
    raw: Any = None

    def __post_init__(self):
        if not self.text:
            raise ValueError("agent reply text must be non-empty")


@dataclass
class SessionSummary:
    turn_count: int = 0
    error_count: int = 0


@dataclass(frozen=True)
class CrsConnectorConfig:
    """Typed connector settings; ``extras`` carries kind-specific options."""

    kind: ConnectorKind
    endpoint_url: str | None = None
    request_mapping: str | None = None
    response_path: str | None = None
    session_header: str | None = None
    timeout: float = 15.0
    label: str | None = None
    extras: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "kind", ConnectorKind(self.kind))
        if self.kind is ConnectorKind.HTTP:
            if not (self.endpoint_url and self.request_mapping and self.response_path):
                raise ConfigError(
                    "HTTP connectors require endpoint_url, request_mapping, and response_path"
                )

    @classmethod
    def from_obj(cls, obj: Mapping[str, Any]) -> "CrsConnectorConfig":
        known = {"kind", "endpoint_url", "request_mapping", "response_path", "session_header", "timeout", "label"}
        try:
            return cls(
                kind=ConnectorKind(obj["kind"]),
                endpoint_url=obj.get("endpoint_url"),
                request_mapping=obj.get("request_mapping"),
                response_path=obj.get("response_path"),
                session_header=obj.get("session_header"),
                timeout=float(obj.get("timeout", 15.0)),
                label=obj.get("label"),
                extras={k: v for k, v in obj.items() if k not in known},
            )
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"invalid connector config: {exc}") from exc


def extract_response_path(payload: Any, path: str) -> Any:
    """Walk dot-separated keys; integer segments index into lists."""
    value = payload
    for segment in path.split("."):
        if isinstance(value, list):
            try:
                value = value[int(segment)]
            except (ValueError, IndexError) as exc:
                raise ConnectorError(f"response path segment {segment!r} failed: {exc}") from exc
        elif isinstance(value, Mapping):
            if segment not in value:
                raise ConnectorError(f"response path segment {segment!r} missing")
            value = value[segment]
        else:
            raise ConnectorError(f"response path segment {segment!r} hit a leaf value")
    return value


class CrsSession:
    """One dialogue-scoped exchange with the agent."""

    def __init__(self, dialogue_id: str):
        self.dialogue_id = dialogue_id
        self._summary = SessionSummary()
        self._closed = False

    def send_user_utterance(self, utterance: Utterance) -> AgentReply:
        raise NotImplementedError

    def close(self) -> SessionSummary:
        self._closed = True
        return self._summary


class CrsConnector:
    """Factory for sessions against one agent."""

    def __init__(self, label: str):
        self.label = label

    def open_session(self, dialogue_id: str) -> CrsSession:
        raise NotImplementedError


# ---------------------------------------------------------------------------
# HTTP connector
# ---------------------------------------------------------------------------


def _substitute_placeholders(node: Any, values: Mapping[str, str]) -> Any:
    if isinstance(node, str):
        out = node
        for name, value in values.items():
            out = out.replace("{" + name + "}", value)
        return out
    if isinstance(node, list):
        return [_substitute_placeholders(child, values) for child in node]
    if isinstance(node, Mapping):
        return {key: _substitute_placeholders(child, values) for key, child in node.items()}
    return node


class HttpCrsSession(CrsSession):
    def __init__(self, connector: "HttpCrsConnector", dialogue_id: str):
        super().__init__(dialogue_id)
        self.connector = connector
        self.session_id = f"{dialogue_id}-{uuid.uuid4().hex[:12]}"
        self.history: list[str] = []

    def send_user_utterance(self, utterance: Utterance) -> AgentReply:
        config = self.connector.config
        body_template = json.loads(config.request_mapping)
        body = _substitute_placeholders(
            body_template,
            {
                "utterance": utterance.text,
                "dialogue_id": self.dialogue_id,
                "history": "\n".join(self.history),
            },
        )
        headers = {}
        if config.session_header:
            headers[config.session_header] = self.session_id

        last_error: str | None = None
        for attempt in (1, 2):  # at most one retry, on transient failures only
            try:
                response = requests.post(
                    config.endpoint_url, json=body, headers=headers, timeout=config.timeout
                )
            except requests.RequestException as exc:
                last_error = f"transport error: {exc}"
                continue
            if response.status_code == 200:
                try:
                    payload = response.json()
                except ValueError as exc:
                    self._summary.error_count += 1
                    raise ConnectorError(f"non-JSON agent response: {exc}") from exc
                text = str(extract_response_path(payload, config.response_path)).strip()
                if not text:
                    self._summary.error_count += 1
                    raise EmptyReply("agent reply carried no text")
                self._summary.turn_count += 1
                self.history.append(f"USER: {utterance.text}")
                self.history.append(f"AGENT: {text}")
                return AgentReply(text=text, raw=payload)
            transient = response.status_code == 429 or response.status_code >= 500
            last_error = f"HTTP {response.status_code}"
            if not transient:
                break
        self._summary.error_count += 1
        raise ConnectorError(f"agent request failed: {last_error}")


class HttpCrsConnector(CrsConnector):
    def __init__(self, config: CrsConnectorConfig):
        super().__init__(config.label or "http-agent")
        if config.kind is not ConnectorKind.HTTP:
            raise ConfigError(f"expected HTTP connector config, got {config.kind}")
        self.config = config

    def open_session(self, dialogue_id: str) -> CrsSession:
        return HttpCrsSession(self, dialogue_id)


# ---------------------------------------------------------------------------
# Scripted connector
# ---------------------------------------------------------------------------


class ScriptedCrsSession(CrsSession):
    def __init__(self, dialogue_id: str, replies: Sequence[str]):
        super().__init__(dialogue_id)
        self._replies = list(replies)
        self._cursor = 0

    def send_user_utterance(self, utterance: Utterance) -> AgentReply:
        if self._cursor >= len(self._replies):
            self._summary.error_count += 1
            raise ConnectorError("scripted agent exhausted its replies")
        reply = self._replies[self._cursor]
        self._cursor += 1
        self._summary.turn_count += 1
        return AgentReply(text=reply)


class ScriptedCrsConnector(CrsConnector):
    """Replays a fixed reply list; every session starts from the top."""

    def __init__(self, replies: Sequence[str], label: str = "scripted-agent"):
        super().__init__(label)
        self.replies = list(replies)

    def open_session(self, dialogue_id: str) -> CrsSession:
        if not self.replies:
            raise ConnectorError("scripted connector has an empty script")
        return ScriptedCrsSession(dialogue_id, self.replies)


# ---------------------------------------------------------------------------
# Rule-based cooperative connector
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RuleBasedBehavior:
    """What the cooperative agent elicits, answers, and recommends."""

    slots: tuple[str, ...] = ()
    answers: dict[str, str] = field(default_factory=dict)
    recommendation: str | None = None
    elicit_intent: str = "Elicit"
    inform_intent: str = "Inform"
    recommend_intent: str = "Recommend"
    ack_intent: str = "Ack"
    inquire_intent: str = "Inquire"

    def __post_init__(self):
        object.__setattr__(self, "slots", tuple(self.slots))
        object.__setattr__(self, "answers", dict(self.answers))


class RuleBasedCrsSession(CrsSession):
    def __init__(self, dialogue_id: str, behavior: RuleBasedBehavior):
        super().__init__(dialogue_id)
        self.behavior = behavior
        self._slots_left = list(behavior.slots)
        self._recommended = False

    def _inquired_slot(self, utterance: Utterance) -> str | None:
        for act in utterance.dialogue_acts:
            if act.intent != self.behavior.inquire_intent or not act.slots:
                continue
            for slot in act.slots:
                if slot in self.behavior.answers:
                    return slot
            return act.slots[0]
        return None

    def send_user_utterance(self, utterance: Utterance) -> AgentReply:
        behavior = self.behavior
        if self._slots_left:
            act = DialogueAct(behavior.elicit_intent, ((self._slots_left.pop(0), None),))
        else:
            inquired = self._inquired_slot(utterance)
            if inquired is not None:
                answer = behavior.answers.get(inquired, "unknown")
                act = DialogueAct(behavior.inform_intent, ((inquired, answer),))
            elif not self._recommended and behavior.recommendation:
                self._recommended = True
                act = DialogueAct(behavior.recommend_intent, (("item", behavior.recommendation),))
            else:
                act = DialogueAct(behavior.ack_intent)
        self._summary.turn_count += 1
        return AgentReply(text=serialize_dialogue_acts([act]))


class RuleBasedCrsConnector(CrsConnector):
    """The deterministic cooperative agent used by the simulator test suites."""

    def __init__(self, behavior: RuleBasedBehavior, label: str = "rule-based-agent"):
        super().__init__(label)
        self.behavior = behavior

    def open_session(self, dialogue_id: str) -> CrsSession:
        return RuleBasedCrsSession(dialogue_id, self.behavior)


# ---------------------------------------------------------------------------
# Config plumbing
# ---------------------------------------------------------------------------


def connector_from_config(config: CrsConnectorConfig | Mapping[str, Any]) -> CrsConnector:
    if isinstance(config, Mapping):
        config = CrsConnectorConfig.from_obj(config)
    if config.kind is ConnectorKind.HTTP:
        return HttpCrsConnector(config)
    if config.kind is ConnectorKind.SCRIPTED:
        replies = config.extras.get("replies", [])
        return ScriptedCrsConnector(replies, label=config.label or "scripted-agent")
    behavior = RuleBasedBehavior(
        slots=tuple(config.extras.get("slots", [])),
        answers={str(k): str(v) for k, v in config.extras.get("answers", {}).items()},
        recommendation=config.extras.get("recommendation"),
    )
    return RuleBasedCrsConnector(behavior, label=config.label or "rule-based-agent")


def load_connector_config(path: str | Path) -> CrsConnectorConfig:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load connector config {path}: {exc}") from exc
    return CrsConnectorConfig.from_obj(obj)
