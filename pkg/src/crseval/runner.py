"""Dialogue and batch orchestration.

A batch derives one seed per dialogue from the master seed, runs each
dialogue independently (optionally across a bounded worker pool), and
writes a unified corpus plus a manifest.  Output is index-ordered and
byte-identical regardless of parallelism.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Mapping

from .agenda import AgendaBasedSimulator, InteractionModel, InteractionModelConfig, build_interaction_model
from .backend import BackendError, TextBackend, backend_from_config
from .crs import (
    ConnectorError,
    ConnectorKind,
    CrsConnector,
    CrsConnectorConfig,
    CrsSession,
    RuleBasedBehavior,
    RuleBasedCrsConnector,
    connector_from_config,
)
from .data_io import CorpusManifest, ItemCollection, load_item_collection, save_corpus, save_manifest
from .dialogue import Dialogue, Participant, Utterance
from .errors import ConfigError
from .language import ActStringNlu, LlmNlg, LlmNlu, TemplateNlg, load_template_store
from .llm_sim import DualPromptSimulator, SinglePromptSimulator, load_prompt_spec
from .simulator import TurnKind, UserSimulator
from .user_model import (
    InformationNeed,
    generate_information_need,
    init_preference_model,
    need_from_obj,
    need_to_obj,
)

logger = logging.getLogger(__name__)


class TerminationReason(str, Enum):
    STOP_ACT = "STOP_ACT"
    STOP_DECISION = "STOP_DECISION"
    TURN_BUDGET = "TURN_BUDGET"
    CONNECTOR_ERROR = "CONNECTOR_ERROR"


def stable_hash(*parts: Any) -> int:
    """Platform- and run-independent integer hash of the given parts."""
    joined = "␟".join(str(part) for part in parts)
    digest = hashlib.sha256(joined.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def seeded_rng(*parts: Any) -> random.Random:
    return random.Random(stable_hash(*parts))


# ---------------------------------------------------------------------------
# Single dialogue
# ---------------------------------------------------------------------------


def run_dialogue(
    simulator: UserSimulator,
    session: CrsSession,
    need: InformationNeed,
    max_turns: int,
    seed: int,
    dialogue_id: str = "dialogue_00000",
    agent_id: str = "agent",
    user_id: str | None = None,
) -> Dialogue:
    """Run one dialogue to completion.

    ``max_turns`` bounds the number of user turns.  A STOP decision or a
    stop act ends the loop; in both cases the closing user utterance is
    still sent to the agent so it can shut down gracefully (its reply is
    discarded).  Connector or backend failures truncate the dialogue with
    termination reason CONNECTOR_ERROR instead of raising.
    """
    if max_turns < 2:
        raise ConfigError("max_turns must be >= 2")
    dialogue = Dialogue(
        dialogue_id=dialogue_id,
        agent_id=agent_id,
        user_id=user_id if user_id is not None else simulator.kind,
    )
    termination = TerminationReason.TURN_BUDGET
    for _turn in range(max_turns):
        try:
            output = simulator.next_user_turn(dialogue)
        except BackendError as exc:
            logger.warning("%s: simulator backend failed: %s", dialogue_id, exc)
            termination = TerminationReason.CONNECTOR_ERROR
            break

        if output.kind is TurnKind.STOP:
            stop_utterance = Utterance(
                participant=Participant.USER,
                text=simulator.default_stop_utterance,
                turn_index=len(dialogue.utterances),
            )
            dialogue.utterances.append(stop_utterance)
            try:
                session.send_user_utterance(stop_utterance)
            except ConnectorError:
                pass  # already stopping; the farewell is best-effort
            termination = TerminationReason.STOP_DECISION
            break

        user_utterance = output.utterance
        if user_utterance.turn_index != len(dialogue.utterances):
            user_utterance = replace(user_utterance, turn_index=len(dialogue.utterances))
        dialogue.utterances.append(user_utterance)
        is_stop_act = simulator.stop_intent is not None and any(
            act.intent == simulator.stop_intent for act in user_utterance.dialogue_acts
        )
        try:
            reply = session.send_user_utterance(user_utterance)
        except ConnectorError as exc:
            logger.warning("%s: connector failed: %s", dialogue_id, exc)
            termination = TerminationReason.CONNECTOR_ERROR
            break
        except BackendError as exc:
            logger.warning("%s: agent backend failed: %s", dialogue_id, exc)
            termination = TerminationReason.CONNECTOR_ERROR
            break
        if is_stop_act:
            termination = TerminationReason.STOP_ACT
            break
        try:
            agent_acts = simulator.interpret_agent_text(reply.text)
        except BackendError as exc:
            logger.warning("%s: NLU backend failed: %s", dialogue_id, exc)
            termination = TerminationReason.CONNECTOR_ERROR
            break
        dialogue.utterances.append(
            Utterance(
                participant=Participant.AGENT,
                text=reply.text,
                dialogue_acts=agent_acts,
                turn_index=len(dialogue.utterances),
            )
        )
    else:
        # Budget exhausted: close gracefully without recording the farewell.
        farewell = Utterance(
            participant=Participant.USER,
            text=simulator.default_stop_utterance,
            turn_index=len(dialogue.utterances),
        )
        try:
            session.send_user_utterance(farewell)
        except ConnectorError:
            pass

    session.close()
    dialogue.metadata["simulator"] = simulator.kind
    dialogue.metadata["seed"] = str(seed)
    dialogue.metadata["information_need"] = json.dumps(need_to_obj(need), ensure_ascii=False)
    dialogue.metadata["termination_reason"] = termination.value
    accepted = getattr(simulator, "state", None)
    if accepted is not None and accepted.accepted_items():
        dialogue.metadata["accepted_items"] = ";".join(accepted.accepted_items())
    return dialogue


# ---------------------------------------------------------------------------
# Batch configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    """Everything a batch needs, loadable from one JSON file."""

    simulator: dict[str, Any]
    connector: dict[str, Any]
    item_collection_path: str
    need_source: dict[str, Any]
    num_dialogues: int
    max_turns: int
    master_seed: int
    output_dir: str
    domain_slots: tuple[str, ...] | None = None
    parallelism: int = 1
    backend: dict[str, Any] | None = None
    base_dir: Path = field(default=Path("."), compare=False)

    def __post_init__(self):
        if self.num_dialogues < 1:
            raise ConfigError("num_dialogues must be >= 1")
        if self.max_turns < 2:
            raise ConfigError("max_turns must be >= 2")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        kind = self.simulator.get("kind")
        if kind not in ("AGENDA", "LLM_SP", "LLM_DP"):
            raise ConfigError(f"unknown simulator kind {kind!r}")
        source_kind = self.need_source.get("kind")
        if source_kind not in ("GENERATED", "FILE"):
            raise ConfigError(f"unknown need source kind {source_kind!r}")

    def resolve(self, path_value: str) -> Path:
        path = Path(path_value)
        return path if path.is_absolute() else self.base_dir / path

    @classmethod
    def from_obj(cls, obj: Mapping[str, Any], base_dir: Path = Path(".")) -> "RunConfig":
        try:
            connector = obj["connector"]
            if isinstance(connector, str):
                path = Path(connector)
                if not path.is_absolute():
                    path = base_dir / path
                connector = json.loads(path.read_text(encoding="utf-8"))
            return cls(
                simulator=dict(obj["simulator"]),
                connector=dict(connector),
                item_collection_path=obj["item_collection"],
                need_source=dict(obj["need_source"]),
                num_dialogues=int(obj["num_dialogues"]),
                max_turns=int(obj["max_turns"]),
                master_seed=int(obj["master_seed"]),
                output_dir=obj["output_dir"],
                domain_slots=tuple(obj["domain_slots"]) if obj.get("domain_slots") else None,
                parallelism=int(obj.get("parallelism", 1)),
                backend=dict(obj["backend"]) if obj.get("backend") else None,
                base_dir=base_dir,
            )
        except (KeyError, TypeError, ValueError, OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"invalid run config: {exc}") from exc

    @classmethod
    def from_json_file(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        try:
            obj = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot load run config {path}: {exc}") from exc
        return cls.from_obj(obj, base_dir=path.parent)


# ---------------------------------------------------------------------------
# Batch assembly
# ---------------------------------------------------------------------------


class _BatchContext:
    """Shared, read-only pieces loaded once per batch."""

    def __init__(self, config: RunConfig):
        self.config = config
        collection_warnings: list[str] = []
        self.collection = load_item_collection(
            config.resolve(config.item_collection_path),
            domain_slots=config.domain_slots,
            warnings=collection_warnings,
        )
        self.collection_warnings = collection_warnings

        sim = config.simulator
        self.sim_kind = sim["kind"]
        self.interaction_model: InteractionModel | None = None
        self.template_store: dict[str, list[str]] | None = None
        if self.sim_kind == "AGENDA":
            model_config = InteractionModelConfig.from_json_file(config.resolve(sim["interaction_model"]))
            self.interaction_model = build_interaction_model([], model_config)
            if "transition_corpus" in sim:
                from .data_io import load_corpus

                corpus = load_corpus(config.resolve(sim["transition_corpus"]))
                self.interaction_model = build_interaction_model(corpus, model_config)
            nlg_config = sim.get("nlg", {"kind": "TEMPLATE"})
            if nlg_config.get("kind", "TEMPLATE") == "TEMPLATE":
                self.template_store = load_template_store(config.resolve(sim["template_store"]))
        self.needs_file: list[InformationNeed] | None = None
        if config.need_source["kind"] == "FILE":
            payload = json.loads(
                config.resolve(config.need_source["path"]).read_text(encoding="utf-8")
            )
            self.needs_file = [need_from_obj(entry) for entry in payload]
            if not self.needs_file:
                raise ConfigError("need file contains no needs")

    def need_for(self, index: int, seed: int) -> InformationNeed:
        if self.needs_file is not None:
            return self.needs_file[index % len(self.needs_file)]
        source = self.config.need_source
        return generate_information_need(
            self.collection,
            int(source.get("n_constraints", 1)),
            int(source.get("n_requests", 0)),
            seeded_rng(seed, "need"),
        )

    def _build_backend(self) -> TextBackend:
        if self.config.backend is None:
            raise ConfigError(f"simulator kind {self.sim_kind} requires a backend config")
        return backend_from_config(self.config.backend)

    def build_simulator(self, need: InformationNeed, seed: int) -> UserSimulator:
        sim = self.config.simulator
        if self.sim_kind == "AGENDA":
            model = self.interaction_model
            prefs = init_preference_model(need, self.collection, seeded_rng(seed, "prefs"))
            nlu_config = sim.get("nlu", {"kind": "ACT_STRING"})
            if nlu_config.get("kind", "ACT_STRING") == "ACT_STRING":
                nlu = ActStringNlu(intents=model.agent_intents)
            else:
                prompt = Path(self.config.resolve(nlu_config["prompt"])).read_text(encoding="utf-8")
                nlu = LlmNlu(
                    self._build_backend(),
                    prompt,
                    intents=model.agent_intents,
                    slots=self.collection.domain_slots,
                )
            nlg_config = sim.get("nlg", {"kind": "TEMPLATE"})
            if nlg_config.get("kind", "TEMPLATE") == "TEMPLATE":
                nlg = TemplateNlg(self.template_store, seeded_rng(seed, "nlg"))
            else:
                prompt = Path(self.config.resolve(nlg_config["prompt"])).read_text(encoding="utf-8")
                nlg = LlmNlg(self._build_backend(), prompt)
            return AgendaBasedSimulator(
                need=need,
                collection=self.collection,
                model=model,
                prefs=prefs,
                nlu=nlu,
                nlg=nlg,
                rng=seeded_rng(seed, "policy"),
                burst_size=int(sim.get("burst_size", 1)),
                turn_budget=self.config.max_turns,
            )
        spec = load_prompt_spec(self.config.resolve(sim["prompt_spec"]), need)
        backend = self._build_backend()
        if self.sim_kind == "LLM_SP":
            return SinglePromptSimulator(spec, backend)
        return DualPromptSimulator(spec, backend)

    def build_connector(self, need: InformationNeed) -> CrsConnector:
        raw = self.config.connector
        config = CrsConnectorConfig.from_obj(raw)
        if config.kind is ConnectorKind.RULE_BASED and config.extras.get("cooperative"):
            return RuleBasedCrsConnector(
                cooperative_behavior(need, self.collection),
                label=config.label or "rule-based-agent",
            )
        return connector_from_config(config)


def cooperative_behavior(need: InformationNeed, collection: ItemCollection) -> RuleBasedBehavior:
    """Derive the cooperative agent from a need: elicit each constraint slot,
    answer each request from the target item, recommend the target."""
    answers: dict[str, str] = {}
    recommendation: str | None = None
    for target_id in need.target_items:
        target = collection.items.get(target_id)
        if target is None:
            continue
        if recommendation is None:
            recommendation = target.name or target.item_id
        for slot in need.request_slots:
            values = target.properties.get(slot)
            if values and slot not in answers:
                answers[slot] = values[0]
    for slot in need.request_slots:
        answers.setdefault(slot, "unknown")
    return RuleBasedBehavior(
        slots=tuple(need.constraint_slots),
        answers=answers,
        recommendation=recommendation,
    )


def run_batch(config: RunConfig) -> tuple[Path, CorpusManifest]:
    """Run ``num_dialogues`` dialogues and write corpus plus manifest.

    Dialogue ``i`` is seeded with ``stable_hash(master_seed, i)``; needs
    come from the generator or round-robin from the need file.  Workers
    never share mutable state, so output does not depend on parallelism.
    """
    context = _BatchContext(config)
    warnings: list[str] = list(context.collection_warnings)

    def run_one(index: int) -> Dialogue | Exception:
        try:
            seed = stable_hash(config.master_seed, index)
            need = context.need_for(index, seed)
            simulator = context.build_simulator(need, seed)
            connector = context.build_connector(need)
            dialogue_id = f"dialogue_{index:05d}"
            session = connector.open_session(dialogue_id)
            return run_dialogue(
                simulator,
                session,
                need,
                config.max_turns,
                seed,
                dialogue_id=dialogue_id,
                agent_id=connector.label,
            )
        except Exception as exc:  # per-dialogue failures never abort the batch
            return exc

    indices = range(config.num_dialogues)
    if config.parallelism > 1:
        with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
            results = list(pool.map(run_one, indices))
    else:
        results = [run_one(i) for i in indices]

    dialogues: list[Dialogue] = []
    termination_counts: dict[str, int] = {}
    for index, result in enumerate(results):
        if isinstance(result, Exception):
            warnings.append(f"dialogue {index} failed: {result}")
            logger.warning("dialogue %d failed: %s", index, result)
            continue
        dialogues.append(result)
        reason = result.metadata.get("termination_reason", "UNKNOWN")
        termination_counts[reason] = termination_counts.get(reason, 0) + 1

    output_dir = config.resolve(config.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    corpus_path = output_dir / "dialogues.json"
    save_corpus(dialogues, corpus_path)
    manifest = CorpusManifest(
        source_name="simulation",
        dialogue_count=len(dialogues),
        annotation_kinds=[],
        conversion_warnings=warnings,
        termination_counts=termination_counts,
    )
    save_manifest(manifest, output_dir / "manifest.json")
    return corpus_path, manifest
