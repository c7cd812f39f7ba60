"""Prompt-based user simulators.

The single-prompt simulator builds one zero-shot prompt per turn (task
description, optional persona, information need, role-tagged history,
cue) and never decides to stop.  The dual-prompt simulator first asks a
separate stopping prompt -- which deliberately omits the information
need -- whether the user would continue, and only then generates.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .backend import DEFAULT_GENERATION_TEMPERATURE, GenerationRequest
from .dialogue import Dialogue, Participant, Utterance, render_history_lines
from .language import EmptyGeneration
from .simulator import SimulatorTurnOutput, TurnKind, UserSimulator
from .user_model import InformationNeed, Persona

logger = logging.getLogger(__name__)

GENERATION_CUE = "Write the next USER message."
STOP_CUE = "Answer with a single word: CONTINUE or STOP."
DEFAULT_STOP_UTTERANCE = "Goodbye."

_STOP_TOKEN_RE = re.compile(r"\b(continue|stop)\b", re.IGNORECASE)
_ECHOED_ROLE_RE = re.compile(r"^\s*USER:\s*")


class HistoryFormat(str, Enum):
    ROLE_TAGGED_LINES = "ROLE_TAGGED_LINES"


@dataclass(frozen=True)
class PromptSpec:
    """Everything needed to prompt a simulated user, minus the history."""

    task_description: str
    need: InformationNeed
    persona: Persona | None = None
    stop_task_description: str | None = None
    default_stop_utterance: str = DEFAULT_STOP_UTTERANCE
    history_format: HistoryFormat = HistoryFormat.ROLE_TAGGED_LINES

    def __post_init__(self):
        if not self.task_description:
            raise ValueError("task_description must be non-empty")
        object.__setattr__(self, "history_format", HistoryFormat(self.history_format))


def load_prompt_spec(path: str | Path, need: InformationNeed) -> PromptSpec:
    """Load task/persona/stop texts from JSON; the need is supplied by the caller."""
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    persona = None
    if obj.get("persona"):
        persona = Persona(attributes={str(k): str(v) for k, v in obj["persona"].items()})
    return PromptSpec(
        task_description=obj["task_description"],
        need=need,
        persona=persona,
        stop_task_description=obj.get("stop_task_description"),
        default_stop_utterance=obj.get("default_stop_utterance", DEFAULT_STOP_UTTERANCE),
    )


def render_information_need(need: InformationNeed) -> str:
    lines = ["Information need:"]
    if need.constraints:
        lines.append("Constraints:")
        lines.extend(f"{slot}: {value}" for slot, value in need.constraints.items())
    if need.requests:
        lines.append("Requests:")
        lines.extend(
            f"{slot}: {value if value is not None else '?'}"
            for slot, value in need.requests.items()
        )
    if need.target_items:
        lines.append("Targets:")
        lines.extend(str(target) for target in need.target_items)
    return "\n".join(lines)


def _render_persona(persona: Persona | None) -> str | None:
    if persona is None or not persona.attributes:
        return None
    lines = ["Persona:"]
    lines.extend(f"{key}: {value}" for key, value in persona.attributes.items())
    return "\n".join(lines)


def _render_history_block(history: Dialogue) -> str | None:
    if not history.utterances:
        return None
    return "Conversation history:\n" + render_history_lines(history)


def build_generation_prompt(spec: PromptSpec, history: Dialogue) -> str:
    """Compose the zero-shot generation prompt, byte-deterministic.

    Section order: task description, persona (omitted entirely when
    absent), information need, role-tagged history (omitted when empty),
    and the final cue line.
    """
    sections = [spec.task_description]
    persona_block = _render_persona(spec.persona)
    if persona_block:
        sections.append(persona_block)
    sections.append(render_information_need(spec.need))
    history_block = _render_history_block(history)
    if history_block:
        sections.append(history_block)
    sections.append(GENERATION_CUE)
    return "\n\n".join(sections)


def build_stopping_prompt(spec: PromptSpec, history: Dialogue) -> str:
    """Compose the stop-decision prompt: no information need, by design."""
    if not spec.stop_task_description:
        raise ValueError("stop_task_description is required for the stopping prompt")
    sections = [spec.stop_task_description]
    persona_block = _render_persona(spec.persona)
    if persona_block:
        sections.append(persona_block)
    history_block = _render_history_block(history)
    if history_block:
        sections.append(history_block)
    sections.append(STOP_CUE)
    return "\n\n".join(sections)


def single_prompt_turn(
    spec: PromptSpec,
    history: Dialogue,
    backend,
    max_retries: int = 2,
) -> SimulatorTurnOutput:
    """One generation call; never stops.

    An echoed leading ``USER:`` tag is stripped from the reply; empty
    replies are retried and eventually raise :class:`EmptyGeneration`.
    """
    prompt = build_generation_prompt(spec, history)
    for _attempt in range(max_retries + 1):
        reply = backend.complete(
            GenerationRequest(
                prompt=prompt, temperature=DEFAULT_GENERATION_TEMPERATURE, tag="simulator.generate"
            )
        )
        text = _ECHOED_ROLE_RE.sub("", reply.text.strip()).strip()
        if text:
            utterance = Utterance(
                participant=Participant.USER,
                text=text,
                turn_index=len(history.utterances),
            )
            return SimulatorTurnOutput(kind=TurnKind.UTTERANCE, utterance=utterance)
    raise EmptyGeneration(f"no user text generated after {max_retries} retries")


def dual_prompt_turn(
    spec: PromptSpec,
    history: Dialogue,
    backend,
    max_retries: int = 2,
    warnings: list[str] | None = None,
) -> SimulatorTurnOutput:
    """Stop decision first, then (on CONTINUE) the regular generation turn.

    The first CONTINUE/STOP token in the reply wins, case-insensitively.
    An undecidable reply after the retry budget counts as CONTINUE with a
    warning.  The generation prompt is byte-identical to the
    single-prompt simulator's.
    """
    prompt = build_stopping_prompt(spec, history)
    decision: str | None = None
    for _attempt in range(max_retries + 1):
        reply = backend.complete(
            GenerationRequest(prompt=prompt, temperature=0.0, tag="simulator.stop_decision")
        )
        match = _STOP_TOKEN_RE.search(reply.text)
        if match:
            decision = match.group(1).upper()
            break
    if decision is None:
        message = f"stop decision undecidable after {max_retries} retries, continuing"
        logger.warning(message)
        if warnings is not None:
            warnings.append(message)
        decision = "CONTINUE"
    if decision == "STOP":
        return SimulatorTurnOutput(kind=TurnKind.STOP)
    return single_prompt_turn(spec, history, backend, max_retries=max_retries)


class SinglePromptSimulator(UserSimulator):
    kind = "LLM_SP"

    def __init__(self, spec: PromptSpec, backend, max_retries: int = 2):
        self.spec = spec
        self.backend = backend
        self.max_retries = max_retries
        self.default_stop_utterance = spec.default_stop_utterance

    def next_user_turn(self, history: Dialogue) -> SimulatorTurnOutput:
        return single_prompt_turn(self.spec, history, self.backend, max_retries=self.max_retries)


class DualPromptSimulator(UserSimulator):
    kind = "LLM_DP"

    def __init__(self, spec: PromptSpec, backend, max_retries: int = 2):
        if not spec.stop_task_description:
            raise ValueError("DualPromptSimulator requires a stop_task_description")
        self.spec = spec
        self.backend = backend
        self.max_retries = max_retries
        self.default_stop_utterance = spec.default_stop_utterance

    def next_user_turn(self, history: Dialogue) -> SimulatorTurnOutput:
        return dual_prompt_turn(self.spec, history, self.backend, max_retries=self.max_retries)
