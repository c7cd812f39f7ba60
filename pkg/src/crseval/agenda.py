"""Agenda-based user simulation.

The simulator keeps a LIFO agenda of planned dialogue acts, initialized
from the information need, and reacts to each agent turn according to
which of four situations the turn falls into: the agent elicited a
preference, recommended an item, answered an inquiry, or anything else.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .data_io import Item, ItemCollection
from .dialogue import Dialogue, DialogueAct, Participant, Utterance
from .simulator import SimulatorTurnOutput, TurnKind, UserSimulator
from .user_model import Decision, InformationNeed, PreferenceModel, assess_item

logger = logging.getLogger(__name__)

# Bucket for observed intents that fall outside the declared taxonomy.
OTHER_INTENT = "__OTHER__"


class TaxonomyError(Exception):
    """The interaction-model configuration is missing required intents."""


class AgentTurnCategory(str, Enum):
    ELICITATION = "ELICITATION"
    RECOMMENDATION = "RECOMMENDATION"
    INQUIRY_RESPONSE = "INQUIRY_RESPONSE"
    OTHER = "OTHER"


@dataclass(frozen=True)
class InteractionModelConfig:
    """Declared intent taxonomy plus the category map for agent intents."""

    user_intents: tuple[str, ...]
    agent_intents: tuple[str, ...]
    agent_intent_categories: dict[str, AgentTurnCategory]
    disclose_intent: str
    inquire_intent: str
    accept_intent: str
    reject_intent: str
    stop_intent: str

    def __post_init__(self):
        required = {
            "disclose": self.disclose_intent,
            "inquire": self.inquire_intent,
            "accept": self.accept_intent,
            "reject": self.reject_intent,
            "stop": self.stop_intent,
        }
        users = set(self.user_intents)
        missing = [role for role, intent in required.items() if intent not in users]
        if missing:
            raise TaxonomyError(f"required intents missing from user_intents: {missing}")
        agents = set(self.agent_intents)
        unmapped = [i for i in self.agent_intent_categories if i not in agents]
        if unmapped:
            raise TaxonomyError(f"category-mapped intents missing from agent_intents: {unmapped}")

    @classmethod
    def from_obj(cls, obj: Mapping[str, Any]) -> "InteractionModelConfig":
        try:
            required = obj["required"]
            return cls(
                user_intents=tuple(obj["user_intents"]),
                agent_intents=tuple(obj["agent_intents"]),
                agent_intent_categories={
                    intent: AgentTurnCategory(category)
                    for intent, category in obj.get("agent_intent_categories", {}).items()
                },
                disclose_intent=required["disclose"],
                inquire_intent=required["inquire"],
                accept_intent=required["accept"],
                reject_intent=required["reject"],
                stop_intent=obj["stop_intent"],
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise TaxonomyError(f"invalid interaction-model config: {exc}") from exc

    @classmethod
    def from_json_file(cls, path: str | Path) -> "InteractionModelConfig":
        return cls.from_obj(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class InteractionModel:
    """Taxonomy plus bigram counts of observed intent transitions."""

    config: InteractionModelConfig
    transition_counts: dict[tuple[str, str], int] = field(default_factory=dict)

    @property
    def user_intents(self) -> tuple[str, ...]:
        return self.config.user_intents

    @property
    def agent_intents(self) -> tuple[str, ...]:
        return self.config.agent_intents

    @property
    def stop_intent(self) -> str:
        return self.config.stop_intent

    def category_of(self, intent: str) -> AgentTurnCategory | None:
        return self.config.agent_intent_categories.get(intent)


def _first_intent(utterance: Utterance, taxonomy: set[str]) -> str:
    if not utterance.dialogue_acts:
        return OTHER_INTENT
    intent = utterance.dialogue_acts[0].intent
    return intent if intent in taxonomy else OTHER_INTENT


def build_interaction_model(
    corpus: Sequence[Dialogue], config: InteractionModelConfig
) -> InteractionModel:
    """Count (previous intent, next user intent) bigrams over an annotated corpus.

    The previous intent is the first act of the immediately preceding
    utterance regardless of speaker; intents outside the taxonomy (and
    unannotated utterances) are bucketed under ``OTHER_INTENT``.
    """
    taxonomy = set(config.user_intents) | set(config.agent_intents)
    counts: dict[tuple[str, str], int] = {}
    for dialogue in corpus:
        for previous, current in zip(dialogue.utterances, dialogue.utterances[1:]):
            if current.participant is not Participant.USER:
                continue
            key = (_first_intent(previous, taxonomy), _first_intent(current, taxonomy))
            counts[key] = counts.get(key, 0) + 1
    return InteractionModel(config=config, transition_counts=counts)


def classify_agent_turn(
    agent_acts: Sequence[DialogueAct], model: InteractionModel
) -> AgentTurnCategory:
    """First category-mapped act wins, scanning left to right; none maps to OTHER."""
    for act in agent_acts:
        category = model.category_of(act.intent)
        if category is not None:
            return category
    return AgentTurnCategory.OTHER


# ---------------------------------------------------------------------------
# Agenda and dialogue state
# ---------------------------------------------------------------------------


class Agenda:
    """LIFO stack of planned user acts; the last list element is the top."""

    def __init__(self, acts: Iterable[DialogueAct] = ()):
        self._stack: list[DialogueAct] = list(acts)

    def __len__(self) -> int:
        return len(self._stack)

    def __iter__(self):
        return iter(self._stack)

    @property
    def stack(self) -> tuple[DialogueAct, ...]:
        return tuple(self._stack)

    def push(self, act: DialogueAct) -> None:
        self._stack.append(act)

    def pop(self) -> DialogueAct:
        return self._stack.pop()

    def peek(self) -> DialogueAct | None:
        return self._stack[-1] if self._stack else None

    def remove_matching(self, intent: str, slot: str) -> int:
        """Drop all stacked acts with this intent that carry this slot."""
        before = len(self._stack)
        self._stack = [
            act
            for act in self._stack
            if not (act.intent == intent and slot in act.slots)
        ]
        return before - len(self._stack)

    def pop_order(self) -> list[DialogueAct]:
        return list(reversed(self._stack))


@dataclass
class DialogueStateSnapshot:
    """Mutable per-dialogue bookkeeping the policy consults."""

    disclosed_slots: set[str] = field(default_factory=set)
    fulfilled_requests: set[str] = field(default_factory=set)
    recommended: list[tuple[str, Decision]] = field(default_factory=list)
    last_user_intent: str | None = None
    turn_count: int = 0

    def accepted_items(self) -> list[str]:
        return [ref for ref, decision in self.recommended if decision is Decision.ACCEPT]


def initialize_agenda(need: InformationNeed, model: InteractionModel) -> Agenda:
    """Plan the dialogue: disclose every constraint, inquire every request, stop.

    Pop order is constraints in declaration order, then requests in
    declaration order, then the stop act; an empty need leaves just stop.
    """
    config = model.config
    agenda = Agenda()
    agenda.push(DialogueAct(config.stop_intent))
    for slot in reversed(need.request_slots):
        agenda.push(DialogueAct(config.inquire_intent, ((slot, None),)))
    for slot in reversed(need.constraint_slots):
        agenda.push(DialogueAct(config.disclose_intent, ((slot, need.constraints[slot]),)))
    return agenda


def sample_next_intent(
    model: InteractionModel,
    previous_intent: str | None,
    rng: random.Random,
    exclude: frozenset[str] = frozenset(),
) -> str:
    """Draw the next user intent from the transition row of ``previous_intent``.

    The draw is proportional to observed counts over declared user intents;
    an empty (or fully excluded) row falls back to a uniform draw over
    ``user_intents`` minus the stop intent.  Deterministic under a seeded
    ``rng``.
    """
    candidates: list[str] = []
    weights: list[int] = []
    if previous_intent is not None:
        for intent in model.user_intents:
            if intent in exclude:
                continue
            count = model.transition_counts.get((previous_intent, intent), 0)
            if count > 0:
                candidates.append(intent)
                weights.append(count)
    if candidates:
        total = sum(weights)
        mark = rng.random() * total
        cumulative = 0
        for intent, weight in zip(candidates, weights):
            cumulative += weight
            if mark < cumulative:
                return intent
        return candidates[-1]
    fallback = [
        intent
        for intent in model.user_intents
        if intent != model.stop_intent and intent not in exclude
    ]
    if not fallback:
        return model.stop_intent
    return fallback[rng.randrange(len(fallback))]


# ---------------------------------------------------------------------------
# The four-situation update policy
# ---------------------------------------------------------------------------


def _stop_allowed(
    state: DialogueStateSnapshot,
    need: InformationNeed,
    turn_budget: int | None,
) -> bool:
    # The user only quits once the plan is complete: everything disclosed,
    # every question answered, and (when a target exists) something accepted.
    # An exhausted turn budget overrides all of that.
    if turn_budget is not None and state.turn_count + 1 >= turn_budget:
        return True
    if any(slot not in state.disclosed_slots for slot in need.constraint_slots):
        return False
    if any(slot not in state.fulfilled_requests for slot in need.request_slots):
        return False
    if need.target_items and not state.accepted_items():
        return False
    return True


def _is_coherent(
    act: DialogueAct,
    state: DialogueStateSnapshot,
    need: InformationNeed,
    model: InteractionModel,
    turn_budget: int | None,
) -> bool:
    config = model.config
    if act.intent == config.disclose_intent and act.slots:
        return all(slot not in state.disclosed_slots for slot in act.slots)
    if act.intent == config.inquire_intent and act.slots:
        return all(slot not in state.fulfilled_requests for slot in act.slots)
    if act.intent == config.stop_intent:
        return _stop_allowed(state, need, turn_budget)
    if act.intent in (config.accept_intent, config.reject_intent):
        return bool(state.recommended)
    return True


def _synthesize_act(
    intent: str,
    state: DialogueStateSnapshot,
    need: InformationNeed,
    model: InteractionModel,
) -> DialogueAct:
    config = model.config
    if intent == config.disclose_intent:
        for slot in need.constraint_slots:
            if slot not in state.disclosed_slots:
                return DialogueAct(intent, ((slot, need.constraints[slot]),))
    if intent == config.inquire_intent:
        for slot in need.request_slots:
            if slot not in state.fulfilled_requests:
                return DialogueAct(intent, ((slot, None),))
    return DialogueAct(intent)


def _elicited_value(
    slot: str,
    need: InformationNeed,
    prefs: PreferenceModel,
    collection: ItemCollection | None,
) -> str | None:
    """Value to disclose for an elicited slot: the constraint if stated,
    else the first positively-rated value the target item has for it."""
    if slot in need.constraints:
        return need.constraints[slot]
    if collection is not None:
        for target_id in need.target_items:
            target = collection.items.get(target_id)
            if target is None:
                continue
            for value in target.properties.get(slot, []):
                if prefs.rating(slot, value) > 0:
                    return value
    return None


def _resolve_recommendations(
    agent_acts: Sequence[DialogueAct],
    model: InteractionModel,
    collection: ItemCollection | None,
) -> list[tuple[str, Item]]:
    """Collect (reference text, item) pairs from recommendation acts.

    Unresolved references get a synthetic empty item so they are assessed
    as non-target with no constraint violations and neutral preference.
    """
    pairs: list[tuple[str, Item]] = []
    for act in agent_acts:
        if model.category_of(act.intent) is not AgentTurnCategory.RECOMMENDATION:
            continue
        for _slot, value in act.slot_values:
            if value is None:
                continue
            item = collection.resolve_reference(value) if collection is not None else None
            if item is None:
                item = Item(item_id=f"__unresolved__:{value}", name=value, properties={})
            pairs.append((value, item))
    return pairs


def update_agenda(
    agenda: Agenda,
    agent_acts: Sequence[DialogueAct],
    state: DialogueStateSnapshot,
    need: InformationNeed,
    prefs: PreferenceModel,
    collection: ItemCollection | None,
    model: InteractionModel,
    rng: random.Random,
    burst_size: int = 1,
    turn_budget: int | None = None,
) -> tuple[list[DialogueAct], Agenda, DialogueStateSnapshot]:
    """Advance the agenda one user turn in reaction to the agent's acts.

    Depending on the agent-turn category:

    * ELICITATION: push a disclose act per newly elicited slot (valued from
      the need, else from a liked target property, else bare), then pop.
    * RECOMMENDATION: assess every referenced item; push an accept act for
      the first accepted item, otherwise a reject act for the first
      rejected one carrying one violated slot with the user's preferred
      value as critique, then pop.
    * INQUIRY_RESPONSE: mark the answered request fulfilled, drop now-moot
      inquire acts from the agenda, then pop.
    * OTHER: pop when the top of the agenda is coherent with the state,
      else sample a next intent from the interaction model and synthesize
      an act for it.

    Popping emits up to ``burst_size`` acts, skips acts made stale by the
    current state, refuses to emit the stop act before the need is
    complete (unless the turn budget is exhausted), and pushes the stop
    act whenever the agenda runs empty.  Mutates and returns ``agenda``
    and ``state``.
    """
    config = model.config
    category = classify_agent_turn(agent_acts, model)

    if category is AgentTurnCategory.ELICITATION:
        elicited: list[str] = []
        for act in agent_acts:
            if model.category_of(act.intent) is AgentTurnCategory.ELICITATION:
                elicited.extend(slot for slot in act.slots if slot not in elicited)
        for slot in reversed(elicited):
            if slot in state.disclosed_slots:
                continue
            value = _elicited_value(slot, need, prefs, collection)
            pairs = ((slot, value),) if value is not None else ((slot, None),)
            agenda.push(DialogueAct(config.disclose_intent, pairs))

    elif category is AgentTurnCategory.RECOMMENDATION:
        assessments = []
        for reference, item in _resolve_recommendations(agent_acts, model, collection):
            assessment = assess_item(item, need, prefs)
            state.recommended.append((reference, assessment.decision))
            assessments.append((reference, item, assessment))
        accepted = [(ref, item) for ref, item, a in assessments if a.decision is Decision.ACCEPT]
        if accepted:
            reference, item = accepted[0]
            agenda.push(DialogueAct(config.accept_intent, (("item", item.name or reference),)))
        elif assessments:
            reference, item, assessment = assessments[0]
            pairs: list[tuple[str, str | None]] = [("item", item.name or reference)]
            if assessment.violated_slots:
                slot = assessment.violated_slots[0]
                pairs.append((slot, need.constraints.get(slot)))
            agenda.push(DialogueAct(config.reject_intent, tuple(pairs)))

    elif category is AgentTurnCategory.INQUIRY_RESPONSE:
        answered: str | None = None
        for act in agent_acts:
            if model.category_of(act.intent) is not AgentTurnCategory.INQUIRY_RESPONSE:
                continue
            for slot in act.slots:
                if slot in need.requests and slot not in state.fulfilled_requests:
                    answered = slot
                    break
            if answered:
                break
        if answered is None:
            for slot in need.request_slots:
                if slot not in state.fulfilled_requests:
                    answered = slot
                    break
        if answered is not None:
            state.fulfilled_requests.add(answered)
            agenda.remove_matching(config.inquire_intent, answered)

    # --- emit the next user act(s) -----------------------------------------
    previous_intent = OTHER_INTENT
    if agent_acts:
        taxonomy = set(model.user_intents) | set(model.agent_intents)
        previous_intent = agent_acts[0].intent if agent_acts[0].intent in taxonomy else OTHER_INTENT

    emitted: list[DialogueAct] = []
    while len(emitted) < burst_size:
        top = agenda.peek()
        if top is None:
            agenda.push(DialogueAct(config.stop_intent))
            top = agenda.peek()
        if not _is_coherent(top, state, need, model, turn_budget):
            if top.intent == config.stop_intent:
                # Stop stays planned; fill the turn with a sampled act instead.
                if emitted:
                    break
                exclude = {config.stop_intent}
                if not state.recommended:
                    exclude |= {config.accept_intent, config.reject_intent}
                # A filler must have substance: no disclose without an
                # undisclosed constraint, no inquire without an open request.
                if all(slot in state.disclosed_slots for slot in need.constraint_slots):
                    exclude.add(config.disclose_intent)
                if all(slot in state.fulfilled_requests for slot in need.request_slots):
                    exclude.add(config.inquire_intent)
                intent = sample_next_intent(model, previous_intent, rng, exclude=frozenset(exclude))
                emitted.append(_synthesize_act(intent, state, need, model))
                break
            agenda.pop()  # stale act, discard
            continue
        emitted.append(agenda.pop())
        # Book-keep immediately so later pops in the same burst see the
        # disclosure (stale duplicates, stop coherence).
        if emitted[-1].intent == config.disclose_intent:
            state.disclosed_slots.update(emitted[-1].slots)
        if emitted[-1].intent == config.stop_intent:
            break

    state.last_user_intent = emitted[0].intent if emitted else None
    state.turn_count += 1
    if len(agenda) == 0 and all(act.intent != config.stop_intent for act in emitted):
        agenda.push(DialogueAct(config.stop_intent))
    return emitted, agenda, state


# ---------------------------------------------------------------------------
# Simulator wrapper
# ---------------------------------------------------------------------------


class AgendaBasedSimulator(UserSimulator):
    """Drives one dialogue from an agenda, with pluggable NLU and NLG."""

    kind = "AGENDA"

    def __init__(
        self,
        need: InformationNeed,
        collection: ItemCollection | None,
        model: InteractionModel,
        prefs: PreferenceModel,
        nlu,
        nlg,
        rng: random.Random,
        burst_size: int = 1,
        turn_budget: int | None = None,
        utterance_annotations: Mapping[str, str] | None = None,
    ):
        self.need = need
        self.collection = collection
        self.model = model
        self.prefs = prefs
        self.nlu = nlu
        self.nlg = nlg
        self.rng = rng
        self.burst_size = burst_size
        self.turn_budget = turn_budget
        self.utterance_annotations = dict(utterance_annotations or {})
        self.agenda = initialize_agenda(need, model)
        self.state = DialogueStateSnapshot()
        self.stop_intent = model.stop_intent

    def interpret_agent_text(self, text: str) -> tuple[DialogueAct, ...]:
        if self.nlu is None:
            return ()
        return tuple(self.nlu.interpret(text))

    def next_user_turn(self, history: Dialogue) -> SimulatorTurnOutput:
        agent_acts: Sequence[DialogueAct] = ()
        if history.utterances and history.utterances[-1].participant is Participant.AGENT:
            agent_acts = history.utterances[-1].dialogue_acts
        acts, _, _ = update_agenda(
            self.agenda,
            agent_acts,
            self.state,
            self.need,
            self.prefs,
            self.collection,
            self.model,
            self.rng,
            burst_size=self.burst_size,
            turn_budget=self.turn_budget,
        )
        text = self.nlg.render(acts)
        utterance = Utterance(
            participant=Participant.USER,
            text=text,
            dialogue_acts=tuple(acts),
            annotations=dict(self.utterance_annotations),
            turn_index=len(history.utterances),
        )
        return SimulatorTurnOutput(kind=TurnKind.UTTERANCE, utterance=utterance)
