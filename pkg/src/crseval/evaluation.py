"""Corpus metrics, LLM-as-a-judge scoring, and report aggregation.

All spreads are population standard deviations; the rendered table rounds
to one decimal while the machine-readable report keeps full precision.
"""

from __future__ import annotations

import json
import logging
import re
import statistics
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Mapping, Sequence

from .backend import BackendError, DEFAULT_PARSE_TEMPERATURE, GenerationRequest
from .dialogue import Dialogue, Participant, render_history_lines

logger = logging.getLogger(__name__)


class EmptyCorpus(Exception):
    """A metric was asked to aggregate over zero dialogues."""


class Aspect(str, Enum):
    RECOMMENDATION_RELEVANCE = "RECOMMENDATION_RELEVANCE"
    COMMUNICATION_STYLE = "COMMUNICATION_STYLE"
    FLUENCY = "FLUENCY"
    CONVERSATIONAL_FLOW = "CONVERSATIONAL_FLOW"
    OVERALL_SATISFACTION = "OVERALL_SATISFACTION"


@dataclass(frozen=True)
class AspectScore:
    aspect: Aspect
    score: int
    rationale: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "aspect", Aspect(self.aspect))
        if not 1 <= self.score <= 5:
            raise ValueError(f"score {self.score} outside 1..5")


@dataclass(frozen=True)
class RubricAspect:
    aspect: Aspect
    definition: str
    descriptors: dict[int, str]

    def __post_init__(self):
        if sorted(self.descriptors) != [1, 2, 3, 4, 5]:
            raise ValueError(f"{self.aspect}: descriptors must cover scores 1..5")


class Rubric:
    """Definitions and five score descriptors per judged aspect."""

    def __init__(self, aspects: Mapping[Aspect, RubricAspect]):
        missing = [a.value for a in Aspect if a not in aspects]
        if missing:
            raise ValueError(f"rubric missing aspects: {missing}")
        self.aspects = dict(aspects)

    @classmethod
    def from_obj(cls, obj: Mapping[str, Any]) -> "Rubric":
        aspects: dict[Aspect, RubricAspect] = {}
        for name, body in obj.items():
            aspect = Aspect(name)
            aspects[aspect] = RubricAspect(
                aspect=aspect,
                definition=body["definition"],
                descriptors={int(k): str(v) for k, v in body["descriptors"].items()},
            )
        return cls(aspects)

    @classmethod
    def from_json_file(cls, path: str | Path) -> "Rubric":
        return cls.from_obj(json.loads(Path(path).read_text(encoding="utf-8")))


_SCORE_RE = re.compile(r"SCORE:\s*(-?\d+)", re.IGNORECASE)
_RATIONALE_RE = re.compile(r"RATIONALE:\s*(.+)", re.IGNORECASE | re.DOTALL)


def _judge_prompt(dialogue: Dialogue, rubric_aspect: RubricAspect) -> str:
    lines = [
        "You are rating one aspect of a conversation between a user (USER) and a",
        "recommendation assistant (ASSISTANT).",
        "",
        f"Aspect: {rubric_aspect.aspect.value}",
        rubric_aspect.definition,
        "",
        "Score meanings:",
    ]
    lines.extend(f"{score}: {rubric_aspect.descriptors[score]}" for score in range(1, 6))
    lines.extend(
        [
            "",
            "Conversation:",
            render_history_lines(dialogue),
            "",
            "Reply in exactly this format:",
            "SCORE: <integer 1-5>",
            "RATIONALE: <one short sentence, optional>",
        ]
    )
    return "\n".join(lines)


def judge_dialogue(
    dialogue: Dialogue,
    rubric: Rubric,
    backend,
    max_retries: int = 2,
) -> list[AspectScore]:
    """Score every rubric aspect with one backend call each.

    Replies are scanned for the first ``SCORE: <integer>``; out-of-range
    or malformed replies are retried, and an aspect that stays unparseable
    is simply absent from the result (callers report it as unscored).
    """
    scores: list[AspectScore] = []
    for aspect in Aspect:
        rubric_aspect = rubric.aspects[aspect]
        prompt = _judge_prompt(dialogue, rubric_aspect)
        parsed: AspectScore | None = None
        for _attempt in range(max_retries + 1):
            reply = backend.complete(
                GenerationRequest(
                    prompt=prompt,
                    temperature=DEFAULT_PARSE_TEMPERATURE,
                    tag=f"judge.{aspect.value}",
                )
            )
            match = _SCORE_RE.search(reply.text)
            if not match:
                continue
            value = int(match.group(1))
            if not 1 <= value <= 5:
                continue
            rationale_match = _RATIONALE_RE.search(reply.text)
            rationale = rationale_match.group(1).strip() if rationale_match else None
            parsed = AspectScore(aspect=aspect, score=value, rationale=rationale)
            break
        if parsed is not None:
            scores.append(parsed)
        else:
            logger.warning(
                "%s: aspect %s unscored after %d retries",
                dialogue.dialogue_id,
                aspect.value,
                max_retries,
            )
    return scores


# ---------------------------------------------------------------------------
# Classic metrics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MetricAggregate:
    mean: float
    std: float
    n: int


def _aggregate(values: Sequence[float]) -> MetricAggregate:
    return MetricAggregate(
        mean=statistics.fmean(values),
        std=statistics.pstdev(values),
        n=len(values),
    )


def metric_avg_turns(corpus: Sequence[Dialogue]) -> MetricAggregate:
    """Mean and population std of utterance counts (one turn per utterance)."""
    if not corpus:
        raise EmptyCorpus("cannot average turns over an empty corpus")
    return _aggregate([len(d.utterances) for d in corpus])


_NORMAL_TERMINATIONS = frozenset({"STOP_ACT", "STOP_DECISION"})


class HeuristicSatisfactionScorer:
    """Deterministic 5/3/1 rule from termination reason and acceptance.

    5: terminated normally with an accepted item; 3: terminated normally
    without one; 1: ran out of turns or hit a connector error.
    """

    label = "heuristic"

    def __init__(self, accept_intent: str = "Accept"):
        self.accept_intent = accept_intent

    def _accepted(self, dialogue: Dialogue) -> bool:
        if dialogue.metadata.get("accepted_items"):
            return True
        for utterance in dialogue.utterances:
            if utterance.participant is not Participant.USER:
                continue
            for act in utterance.dialogue_acts:
                if act.intent == self.accept_intent:
                    return True
        return False

    def score(self, dialogue: Dialogue) -> int | None:
        termination = dialogue.metadata.get("termination_reason", "")
        if termination in _NORMAL_TERMINATIONS:
            return 5 if self._accepted(dialogue) else 3
        return 1


class LlmJudgeSatisfactionScorer:
    """Maps overall satisfaction through the judge; unscorable gives None."""

    label = "llm_judge"

    def __init__(self, rubric: Rubric, backend, max_retries: int = 2):
        self.rubric = rubric
        self.backend = backend
        self.max_retries = max_retries

    def score(self, dialogue: Dialogue) -> int | None:
        try:
            scores = judge_dialogue(dialogue, self.rubric, self.backend, self.max_retries)
        except BackendError as exc:
            logger.warning("%s: judge backend failed: %s", dialogue.dialogue_id, exc)
            return None
        for aspect_score in scores:
            if aspect_score.aspect is Aspect.OVERALL_SATISFACTION:
                return aspect_score.score
        return None


def metric_user_satisfaction(
    corpus: Sequence[Dialogue],
    scorer,
) -> tuple[MetricAggregate, dict[str, int], list[str]]:
    """Per-dialogue satisfaction under a pluggable scorer.

    Returns the aggregate, the per-dialogue scores, and the ids of
    dialogues the scorer could not score.
    """
    if not corpus:
        raise EmptyCorpus("cannot score satisfaction over an empty corpus")
    per_dialogue: dict[str, int] = {}
    unscored: list[str] = []
    for dialogue in corpus:
        score = scorer.score(dialogue)
        if score is None:
            unscored.append(dialogue.dialogue_id)
        else:
            per_dialogue[dialogue.dialogue_id] = score
    if per_dialogue:
        aggregate = _aggregate(list(per_dialogue.values()))
    else:
        aggregate = MetricAggregate(mean=float("nan"), std=float("nan"), n=0)
    return aggregate, per_dialogue, unscored


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------


@dataclass
class EvaluationReport:
    """Machine-readable evaluation results, full precision."""

    scorer_label: str
    std_kind: str = "population"
    aggregates: dict[str, MetricAggregate] = field(default_factory=dict)
    groups: dict[str, dict[str, MetricAggregate]] = field(default_factory=dict)
    per_dialogue: dict[str, dict[str, Any]] = field(default_factory=dict)
    unscored_counts: dict[str, int] = field(default_factory=dict)

    def to_obj(self) -> dict[str, Any]:
        def aggregate_obj(agg: MetricAggregate) -> dict[str, Any]:
            return {"mean": agg.mean, "std": agg.std, "n": agg.n}

        return {
            "scorer": self.scorer_label,
            "std_kind": self.std_kind,
            "aggregates": {name: aggregate_obj(a) for name, a in self.aggregates.items()},
            "groups": {
                label: {name: aggregate_obj(a) for name, a in metrics.items()}
                for label, metrics in self.groups.items()
            },
            "per_dialogue": self.per_dialogue,
            "unscored_counts": dict(self.unscored_counts),
        }

    @classmethod
    def from_obj(cls, obj: Mapping[str, Any]) -> "EvaluationReport":
        def aggregate(entry: Mapping[str, Any]) -> MetricAggregate:
            return MetricAggregate(float(entry["mean"]), float(entry["std"]), int(entry["n"]))

        return cls(
            scorer_label=obj.get("scorer", "heuristic"),
            std_kind=obj.get("std_kind", "population"),
            aggregates={name: aggregate(a) for name, a in obj.get("aggregates", {}).items()},
            groups={
                label: {name: aggregate(a) for name, a in metrics.items()}
                for label, metrics in obj.get("groups", {}).items()
            },
            per_dialogue={k: dict(v) for k, v in obj.get("per_dialogue", {}).items()},
            unscored_counts={k: int(v) for k, v in obj.get("unscored_counts", {}).items()},
        )


def evaluate_corpus(
    corpus: Sequence[Dialogue],
    rubric: Rubric | None = None,
    backend=None,
    satisfaction_scorer=None,
    judge_retries: int = 2,
) -> EvaluationReport:
    """Compute avg turns, satisfaction, and (when a rubric and backend are
    given) the five judged aspects, grouped per agent."""
    if not corpus:
        raise EmptyCorpus("cannot evaluate an empty corpus")
    scorer = satisfaction_scorer or HeuristicSatisfactionScorer()
    report = EvaluationReport(scorer_label=scorer.label)

    turn_counts: dict[str, int] = {d.dialogue_id: len(d.utterances) for d in corpus}
    satisfaction_aggregate, satisfaction_scores, satisfaction_unscored = metric_user_satisfaction(
        corpus, scorer
    )
    report.aggregates["avg_turns"] = metric_avg_turns(corpus)
    report.aggregates["user_satisfaction"] = satisfaction_aggregate
    report.unscored_counts["user_satisfaction"] = len(satisfaction_unscored)

    aspect_scores: dict[str, dict[str, AspectScore]] = {}
    if rubric is not None and backend is not None:
        for dialogue in corpus:
            try:
                scores = judge_dialogue(dialogue, rubric, backend, max_retries=judge_retries)
            except BackendError as exc:
                logger.warning("judge failed on %s: %s", dialogue.dialogue_id, exc)
                scores = []
            aspect_scores[dialogue.dialogue_id] = {s.aspect.value: s for s in scores}
        for aspect in Aspect:
            values = [
                scores[aspect.value].score
                for scores in aspect_scores.values()
                if aspect.value in scores
            ]
            if values:
                report.aggregates[aspect.value] = _aggregate(values)
            report.unscored_counts[aspect.value] = sum(
                1 for scores in aspect_scores.values() if aspect.value not in scores
            )

    for dialogue in corpus:
        entry: dict[str, Any] = {
            "agent_id": dialogue.agent_id,
            "turn_count": turn_counts[dialogue.dialogue_id],
            "termination_reason": dialogue.metadata.get("termination_reason", ""),
        }
        if dialogue.dialogue_id in satisfaction_scores:
            entry["user_satisfaction"] = satisfaction_scores[dialogue.dialogue_id]
        if dialogue.dialogue_id in aspect_scores:
            entry["aspects"] = {
                name: {"score": s.score, "rationale": s.rationale}
                for name, s in sorted(aspect_scores[dialogue.dialogue_id].items())
            }
        report.per_dialogue[dialogue.dialogue_id] = entry

    for label in sorted({d.agent_id for d in corpus}):
        group = [d for d in corpus if d.agent_id == label]
        metrics: dict[str, MetricAggregate] = {"avg_turns": metric_avg_turns(group)}
        group_satisfaction = [
            satisfaction_scores[d.dialogue_id] for d in group if d.dialogue_id in satisfaction_scores
        ]
        if group_satisfaction:
            metrics["user_satisfaction"] = _aggregate(group_satisfaction)
        for aspect in Aspect:
            values = [
                aspect_scores[d.dialogue_id][aspect.value].score
                for d in group
                if d.dialogue_id in aspect_scores and aspect.value in aspect_scores[d.dialogue_id]
            ]
            if values:
                metrics[aspect.value] = _aggregate(values)
        report.groups[label] = metrics
    return report


def save_report(report: EvaluationReport, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(report.to_obj(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )


def load_report(path: str | Path) -> EvaluationReport:
    return EvaluationReport.from_obj(json.loads(Path(path).read_text(encoding="utf-8")))


def render_report_table(report: EvaluationReport) -> str:
    """Plain-text table: one row per agent, ``mean ±std`` to one decimal."""
    metric_names: list[str] = []
    for metrics in report.groups.values():
        for name in metrics:
            if name not in metric_names:
                metric_names.append(name)
    header = ["agent"] + metric_names + ["n"]
    rows: list[list[str]] = []
    for label in sorted(report.groups):
        metrics = report.groups[label]
        n = metrics.get("avg_turns").n if "avg_turns" in metrics else 0
        row = [label]
        for name in metric_names:
            aggregate = metrics.get(name)
            row.append(f"{aggregate.mean:.1f} ±{aggregate.std:.1f}" if aggregate else "-")
        row.append(str(n))
        rows.append(row)
    widths = [max(len(str(cell)) for cell in column) for column in zip(header, *rows)]
    lines = [
        f"# satisfaction scorer: {report.scorer_label}; spread: {report.std_kind} std",
        "  ".join(cell.ljust(width) for cell, width in zip(header, widths)),
        "  ".join("-" * width for width in widths),
    ]
    lines.extend("  ".join(cell.ljust(width) for cell, width in zip(row, widths)) for row in rows)
    unscored = {k: v for k, v in report.unscored_counts.items() if v}
    if unscored:
        lines.append("# unscored: " + ", ".join(f"{k}={v}" for k, v in sorted(unscored.items())))
    return "\n".join(lines)
