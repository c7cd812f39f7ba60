"""Dialogue data model and the dialogue-act string grammar.

A dialogue-act string encodes one or more acts::

    acts  := act ("|" act)*
    act   := intent "(" [param ("," param)*] ")"
    param := slot ["=" quoted_value]

Values are always double-quoted; ``\\"`` and ``\\\\`` escape a quote and a
backslash inside a value.  Whitespace around separators is tolerated on
parse and never produced on serialization.  Intent and slot names are
free-form identifiers that may not contain the reserved characters
``( ) | , = "`` or whitespace.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping

RESERVED_CHARS = frozenset('()|,="')


class MalformedActString(ValueError):
    """Raised when an act string cannot be parsed.

    ``offset`` is the byte offset (UTF-8) into the input where parsing
    failed; ``reason`` is a short human-readable explanation.
    """

    def __init__(self, reason: str, offset: int):
        super().__init__(f"{reason} (at byte offset {offset})")
        self.reason = reason
        self.offset = offset


class InvalidAct(ValueError):
    """Raised when an act violates the identifier rules and cannot be serialized."""


def _check_identifier(name: str, role: str) -> None:
    if not name:
        raise InvalidAct(f"empty {role}")
    for ch in name:
        if ch in RESERVED_CHARS or ch.isspace():
            raise InvalidAct(f"{role} {name!r} contains reserved character {ch!r}")


@dataclass(frozen=True)
class DialogueAct:
    """One communicative act: an intent plus ordered, optionally-valued slots."""

    intent: str
    slot_values: tuple[tuple[str, str | None], ...] = ()

    def __post_init__(self):
        _check_identifier(self.intent, "intent")
        normalized = tuple((slot, value) for slot, value in self.slot_values)
        for slot, value in normalized:
            _check_identifier(slot, "slot")
            if value is not None and not isinstance(value, str):
                raise InvalidAct(f"slot {slot!r} has non-string value {value!r}")
        object.__setattr__(self, "slot_values", normalized)

    @property
    def slots(self) -> tuple[str, ...]:
        return tuple(slot for slot, _ in self.slot_values)

    def value_of(self, slot: str) -> str | None:
        for name, value in self.slot_values:
            if name == slot:
                return value
        return None


class Participant(str, Enum):
    USER = "USER"
    AGENT = "AGENT"


@dataclass(frozen=True)
class Utterance:
    """A single utterance, optionally annotated with acts and free-form labels."""

    participant: Participant
    text: str
    dialogue_acts: tuple[DialogueAct, ...] = ()
    annotations: Mapping[str, str] = field(default_factory=dict)
    turn_index: int = 0
    extra: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "participant", Participant(self.participant))
        object.__setattr__(self, "dialogue_acts", tuple(self.dialogue_acts))
        if self.turn_index < 0:
            raise ValueError("turn_index must be >= 0")


@dataclass
class Dialogue:
    """An ordered exchange between one user and one agent."""

    dialogue_id: str
    agent_id: str = ""
    user_id: str = ""
    utterances: list[Utterance] = field(default_factory=list)
    metadata: dict[str, str] = field(default_factory=dict)
    extra: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not self.dialogue_id:
            raise ValueError("dialogue_id must be non-empty")


# ---------------------------------------------------------------------------
# Act string parsing
# ---------------------------------------------------------------------------


class _ActParser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def fail(self, reason: str, at: int | None = None) -> None:
        pos = self.pos if at is None else at
        raise MalformedActString(reason, len(self.text[:pos].encode("utf-8")))

    def eof(self) -> bool:
        return self.pos >= len(self.text)

    def peek(self) -> str:
        return self.text[self.pos]

    def skip_ws(self) -> None:
        while not self.eof() and self.peek().isspace():
            self.pos += 1

    def read_identifier(self) -> str:
        start = self.pos
        while not self.eof():
            ch = self.peek()
            if ch in RESERVED_CHARS or ch.isspace():
                break
            self.pos += 1
        return self.text[start:self.pos]

    def read_quoted_value(self) -> str:
        quote_at = self.pos
        self.pos += 1  # opening quote
        out: list[str] = []
        while True:
            if self.eof():
                self.fail("unterminated quote", at=quote_at)
            ch = self.peek()
            if ch == "\\":
                nxt = self.text[self.pos + 1] if self.pos + 1 < len(self.text) else None
                if nxt in ('"', "\\"):
                    out.append(nxt)
                    self.pos += 2
                    continue
                out.append(ch)
                self.pos += 1
                continue
            if ch == '"':
                self.pos += 1
                return "".join(out)
            out.append(ch)
            self.pos += 1

    def parse_param(self) -> tuple[str, str | None]:
        self.skip_ws()
        at = self.pos
        slot = self.read_identifier()
        if not slot:
            self.fail("stray separator or missing slot name", at=at)
        self.skip_ws()
        if not self.eof() and self.peek() == "=":
            self.pos += 1
            self.skip_ws()
            if self.eof() or self.peek() != '"':
                self.fail("expected quoted value after '='")
            return slot, self.read_quoted_value()
        return slot, None

    def parse_act(self) -> DialogueAct:
        self.skip_ws()
        at = self.pos
        intent = self.read_identifier()
        if not intent:
            self.fail("empty intent", at=at)
        self.skip_ws()
        if self.eof() or self.peek() != "(":
            self.fail("expected '(' after intent")
        open_at = self.pos
        self.pos += 1
        self.skip_ws()
        params: list[tuple[str, str | None]] = []
        if not self.eof() and self.peek() == ")":
            self.pos += 1
            return DialogueAct(intent, tuple(params))
        while True:
            params.append(self.parse_param())
            self.skip_ws()
            if self.eof():
                self.fail("unbalanced parenthesis", at=open_at)
            ch = self.peek()
            if ch == ",":
                self.pos += 1
                continue
            if ch == ")":
                self.pos += 1
                return DialogueAct(intent, tuple(params))
            self.fail(f"expected ',' or ')', found {ch!r}")

    def parse(self) -> list[DialogueAct]:
        acts = [self.parse_act()]
        while True:
            self.skip_ws()
            if self.eof():
                return acts
            if self.peek() == "|":
                self.pos += 1
                acts.append(self.parse_act())
                continue
            self.fail(f"unexpected character {self.peek()!r} after act")


def parse_dialogue_acts(text: str) -> list[DialogueAct]:
    """Parse an act string into a list of acts.

    Raises :class:`MalformedActString` with a byte offset on any violation
    of the grammar; an empty input fails at offset 0.
    """
    return _ActParser(text).parse()


def _escape_value(value: str) -> str:
    return value.replace("\\", "\\\\").replace('"', '\\"')


def serialize_dialogue_acts(acts: Iterable[DialogueAct]) -> str:
    """Render acts in canonical form: no whitespace, all values quoted.

    The canonical form round-trips exactly through :func:`parse_dialogue_acts`.
    An empty act list renders as the empty string.
    """
    parts: list[str] = []
    for act in acts:
        _check_identifier(act.intent, "intent")
        params: list[str] = []
        for slot, value in act.slot_values:
            _check_identifier(slot, "slot")
            if value is None:
                params.append(slot)
            else:
                params.append(f'{slot}="{_escape_value(value)}"')
        parts.append(f"{act.intent}({','.join(params)})")
    return "|".join(parts)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ValidationFinding:
    """One violated rule, anchored to an utterance when applicable."""

    rule: str
    message: str
    utterance_index: int | None = None


def validate_dialogue(dialogue: Dialogue, strict_alternation: bool = False) -> list[ValidationFinding]:
    """Check structural invariants; returns an empty list iff all hold.

    With ``strict_alternation`` the utterances must alternate USER/AGENT.
    """
    findings: list[ValidationFinding] = []
    if not dialogue.dialogue_id:
        findings.append(ValidationFinding("dialogue_id", "dialogue_id is empty"))
    previous_index: int | None = None
    previous_participant: Participant | None = None
    for i, utt in enumerate(dialogue.utterances):
        if previous_index is not None and utt.turn_index <= previous_index:
            findings.append(
                ValidationFinding(
                    "turn_index",
                    f"turn_index {utt.turn_index} does not increase over {previous_index}",
                    utterance_index=i,
                )
            )
        previous_index = utt.turn_index
        if strict_alternation and previous_participant is not None and utt.participant == previous_participant:
            findings.append(
                ValidationFinding(
                    "alternation",
                    f"consecutive {utt.participant.value} utterances",
                    utterance_index=i,
                )
            )
        previous_participant = utt.participant
        for act in utt.dialogue_acts:
            try:
                serialize_dialogue_acts([act])
            except InvalidAct as exc:
                findings.append(ValidationFinding("act", str(exc), utterance_index=i))
    return findings


# ---------------------------------------------------------------------------
# JSON object mapping (corpus file format)
# ---------------------------------------------------------------------------

_DIALOGUE_KEYS = ("dialogue_id", "agent_id", "user_id", "metadata", "utterances")
_UTTERANCE_KEYS = ("participant", "utterance", "turn_index", "dialogue_acts", "annotations")


def act_to_obj(act: DialogueAct) -> dict[str, Any]:
    return {
        "intent": act.intent,
        "slot_values": [[slot, value] for slot, value in act.slot_values],
    }


def act_from_obj(obj: Mapping[str, Any]) -> DialogueAct:
    pairs = tuple((slot, value) for slot, value in obj.get("slot_values", []))
    return DialogueAct(obj["intent"], pairs)


def utterance_to_obj(utt: Utterance) -> dict[str, Any]:
    obj: dict[str, Any] = {
        "participant": utt.participant.value,
        "utterance": utt.text,
        "turn_index": utt.turn_index,
        "dialogue_acts": [act_to_obj(a) for a in utt.dialogue_acts],
        "annotations": {k: utt.annotations[k] for k in sorted(utt.annotations)},
    }
    for key in sorted(utt.extra):
        if key not in obj:
            obj[key] = utt.extra[key]
    return obj


def utterance_from_obj(obj: Mapping[str, Any]) -> Utterance:
    extra = {k: v for k, v in obj.items() if k not in _UTTERANCE_KEYS}
    return Utterance(
        participant=Participant(obj["participant"]),
        text=obj["utterance"],
        dialogue_acts=tuple(act_from_obj(a) for a in obj.get("dialogue_acts", [])),
        annotations=dict(obj.get("annotations", {})),
        turn_index=int(obj.get("turn_index", 0)),
        extra=extra,
    )


def dialogue_to_obj(dialogue: Dialogue) -> dict[str, Any]:
    obj: dict[str, Any] = {
        "dialogue_id": dialogue.dialogue_id,
        "agent_id": dialogue.agent_id,
        "user_id": dialogue.user_id,
        "metadata": {k: dialogue.metadata[k] for k in sorted(dialogue.metadata)},
        "utterances": [utterance_to_obj(u) for u in dialogue.utterances],
    }
    for key in sorted(dialogue.extra):
        if key not in obj:
            obj[key] = dialogue.extra[key]
    return obj


def dialogue_from_obj(obj: Mapping[str, Any]) -> Dialogue:
    extra = {k: v for k, v in obj.items() if k not in _DIALOGUE_KEYS}
    return Dialogue(
        dialogue_id=str(obj["dialogue_id"]),
        agent_id=str(obj.get("agent_id", "")),
        user_id=str(obj.get("user_id", "")),
        utterances=[utterance_from_obj(u) for u in obj.get("utterances", [])],
        metadata={str(k): str(v) for k, v in obj.get("metadata", {}).items()},
        extra=extra,
    )


def render_history_lines(dialogue: Dialogue, agent_tag: str = "ASSISTANT") -> str:
    """Render a dialogue as role-tagged lines, one utterance per line."""
    lines = []
    for utt in dialogue.utterances:
        tag = "USER" if utt.participant is Participant.USER else agent_tag
        lines.append(f"{tag}: {utt.text}")
    return "\n".join(lines)
