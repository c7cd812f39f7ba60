"""Understanding and generation components for the agenda-based simulator.

NLU turns agent reply text into dialogue acts; NLG turns the simulator's
planned acts into surface text.  Both come in a deterministic flavor
(act-string parsing, template filling) and an LLM-backed flavor.
"""

from __future__ import annotations

import json
import logging
import random
import re
from pathlib import Path
from typing import Mapping, Sequence

from .backend import DEFAULT_GENERATION_TEMPERATURE, DEFAULT_PARSE_TEMPERATURE, GenerationRequest
from .data_io import fill_prompt
from .dialogue import (
    DialogueAct,
    MalformedActString,
    parse_dialogue_acts,
    serialize_dialogue_acts,
)

logger = logging.getLogger(__name__)


class NoTemplate(Exception):
    """No template matches the acts, not even a per-intent fallback."""


class EmptyGeneration(Exception):
    """The backend produced only empty text within the retry budget."""


# ---------------------------------------------------------------------------
# NLU
# ---------------------------------------------------------------------------


def _filter_taxonomy(
    acts: Sequence[DialogueAct],
    intents: Sequence[str] | None,
    slots: Sequence[str] | None,
    warnings: list[str] | None,
) -> list[DialogueAct]:
    kept: list[DialogueAct] = []
    intent_set = set(intents) if intents is not None else None
    slot_set = set(slots) if slots is not None else None
    for act in acts:
        if intent_set is not None and act.intent not in intent_set:
            if warnings is not None:
                warnings.append(f"intent {act.intent!r} outside the taxonomy, act dropped")
            continue
        if slot_set is not None and any(slot not in slot_set for slot in act.slots):
            if warnings is not None:
                warnings.append(f"act {act.intent!r} uses out-of-taxonomy slots, act dropped")
            continue
        kept.append(act)
    return kept


class ActStringNlu:
    """Deterministic NLU for agents that speak canonical act strings.

    Used with the scripted and rule-based mock agents, whose reply text is
    itself an act string; anything unparseable yields no acts.
    """

    def __init__(self, intents: Sequence[str] | None = None, slots: Sequence[str] | None = None):
        self.intents = tuple(intents) if intents is not None else None
        self.slots = tuple(slots) if slots is not None else None

    def interpret(self, text: str) -> list[DialogueAct]:
        try:
            acts = parse_dialogue_acts(text.strip())
        except MalformedActString:
            return []
        return _filter_taxonomy(acts, self.intents, self.slots, None)


def nlu_llm(
    text: str,
    intents: Sequence[str],
    slots: Sequence[str],
    backend,
    prompt_template: str,
    max_retries: int = 2,
    warnings: list[str] | None = None,
) -> list[DialogueAct]:
    """Ask the backend to annotate one utterance with dialogue acts.

    The reply must be an act string; acts outside the declared taxonomy
    are dropped with a warning.  After the retry budget the utterance is
    treated as carrying no acts (with a warning), never an error.
    """
    prompt = fill_prompt(
        prompt_template,
        {"utterance": text, "intents": ", ".join(intents), "slots": ", ".join(slots)},
    )
    for _attempt in range(max_retries + 1):
        reply = backend.complete(
            GenerationRequest(prompt=prompt, temperature=DEFAULT_PARSE_TEMPERATURE, tag="nlu")
        )
        try:
            acts = parse_dialogue_acts(reply.text.strip())
        except MalformedActString:
            continue
        return _filter_taxonomy(acts, intents, slots, warnings)
    if warnings is not None:
        warnings.append(f"utterance unparseable after {max_retries} retries, no acts")
    logger.warning("NLU reply unparseable after %d retries", max_retries)
    return []


class LlmNlu:
    def __init__(
        self,
        backend,
        prompt_template: str,
        intents: Sequence[str],
        slots: Sequence[str],
        max_retries: int = 2,
    ):
        self.backend = backend
        self.prompt_template = prompt_template
        self.intents = tuple(intents)
        self.slots = tuple(slots)
        self.max_retries = max_retries

    def interpret(self, text: str) -> list[DialogueAct]:
        return nlu_llm(
            text, self.intents, self.slots, self.backend, self.prompt_template, self.max_retries
        )


# ---------------------------------------------------------------------------
# NLG
# ---------------------------------------------------------------------------


def act_signature(acts: Sequence[DialogueAct]) -> str:
    """Canonical template key: sorted ``intent(slot,...)`` forms joined by ``|``."""
    forms = sorted(f"{act.intent}({','.join(act.slots)})" for act in acts)
    return "|".join(forms)


class _SlotDefaults(dict):
    def __missing__(self, key: str) -> str:
        return key


def _template_values(acts: Sequence[DialogueAct]) -> dict[str, str]:
    values: dict[str, str] = {}
    filled: list[str] = []
    slots: list[str] = []
    for act in acts:
        for slot, value in act.slot_values:
            slots.append(slot)
            if value is not None:
                values[slot] = value
                filled.append(value)
    values["values"] = ", ".join(filled)
    values["slots"] = ", ".join(slots)
    return values


def nlg_template(
    acts: Sequence[DialogueAct],
    template_store: Mapping[str, Sequence[str]],
    rng: random.Random,
) -> str:
    """Render acts from a template store keyed by act signature.

    Falls back to per-intent templates (keyed by the bare intent name)
    when the exact signature is absent; raises :class:`NoTemplate` when
    neither exists.  Template placeholders are slot names (plus ``values``
    and ``slots`` aggregates); a placeholder without a value renders as
    the slot name itself.  Template choice is seeded-uniform.
    """
    if not acts:
        raise NoTemplate("cannot render an empty act list")

    def pick(candidates: Sequence[str]) -> str:
        return candidates[rng.randrange(len(candidates))]

    signature = act_signature(acts)
    candidates = template_store.get(signature)
    if candidates:
        return pick(candidates).format_map(_SlotDefaults(_template_values(acts)))
    rendered: list[str] = []
    for act in acts:
        fallback = template_store.get(act.intent)
        if not fallback:
            raise NoTemplate(f"no template for signature {signature!r} or intent {act.intent!r}")
        rendered.append(pick(fallback).format_map(_SlotDefaults(_template_values([act]))))
    return " ".join(rendered)


class TemplateNlg:
    def __init__(self, template_store: Mapping[str, Sequence[str]], rng: random.Random):
        self.template_store = dict(template_store)
        self.rng = rng

    def render(self, acts: Sequence[DialogueAct]) -> str:
        return nlg_template(acts, self.template_store, self.rng)


def load_template_store(path: str | Path) -> dict[str, list[str]]:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    return {key: list(values) for key, values in obj.items()}


_WRAPPING_QUOTES = re.compile(r'^\s*(["\'])(?P<body>.*)\1\s*$', re.DOTALL)


def nlg_llm(
    acts: Sequence[DialogueAct],
    annotations: Mapping[str, str],
    backend,
    prompt_template: str,
    max_retries: int = 2,
) -> str:
    """Verbalize acts through the backend.

    ``{dialogue_acts}`` receives the canonical act string and
    ``{annotations}`` a ``key=value`` rendering of the extra labels.  The
    reply is stripped of whitespace and wrapping quotes; an empty result
    after the retry budget raises :class:`EmptyGeneration`.
    """
    prompt = fill_prompt(
        prompt_template,
        {
            "dialogue_acts": serialize_dialogue_acts(acts),
            "annotations": ", ".join(f"{k}={v}" for k, v in annotations.items()),
        },
    )
    for _attempt in range(max_retries + 1):
        reply = backend.complete(
            GenerationRequest(prompt=prompt, temperature=DEFAULT_GENERATION_TEMPERATURE, tag="nlg")
        )
        text = reply.text.strip()
        match = _WRAPPING_QUOTES.match(text)
        if match:
            text = match.group("body").strip()
        if text:
            return text
    raise EmptyGeneration(f"backend produced no text after {max_retries} retries")


class LlmNlg:
    def __init__(
        self,
        backend,
        prompt_template: str,
        annotations: Mapping[str, str] | None = None,
        max_retries: int = 2,
    ):
        self.backend = backend
        self.prompt_template = prompt_template
        self.annotations = dict(annotations or {})
        self.max_retries = max_retries

    def render(self, acts: Sequence[DialogueAct]) -> str:
        return nlg_llm(acts, self.annotations, self.backend, self.prompt_template, self.max_retries)
