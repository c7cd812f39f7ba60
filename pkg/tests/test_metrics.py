"""Classic corpus metrics and report plumbing."""

from __future__ import annotations

import math

import pytest

from crseval import (
    Dialogue,
    DialogueAct,
    EmptyCorpus,
    EvaluationReport,
    HeuristicSatisfactionScorer,
    MetricAggregate,
    Participant,
    Utterance,
    evaluate_corpus,
    load_report,
    metric_avg_turns,
    metric_user_satisfaction,
    render_report_table,
    save_report,
)


def make_dialogue(
    dialogue_id: str,
    n_utterances: int,
    termination: str = "STOP_ACT",
    agent_id: str = "agent-a",
    accepted: str | None = None,
    user_acts: dict[int, tuple[DialogueAct, ...]] | None = None,
) -> Dialogue:
    dialogue = Dialogue(dialogue_id=dialogue_id, agent_id=agent_id, user_id="sim")
    for index in range(n_utterances):
        participant = Participant.USER if index % 2 == 0 else Participant.AGENT
        acts = (user_acts or {}).get(index, ())
        dialogue.utterances.append(
            Utterance(
                participant=participant,
                text=f"line {index}",
                turn_index=index,
                dialogue_acts=acts,
            )
        )
    dialogue.metadata["termination_reason"] = termination
    if accepted:
        dialogue.metadata["accepted_items"] = accepted
    return dialogue


class FixedScorer:
    label = "fixed"

    def __init__(self, scores: dict[str, int | None]):
        self.scores = scores

    def score(self, dialogue: Dialogue) -> int | None:
        return self.scores[dialogue.dialogue_id]


class TestAvgTurns:
    def test_hand_computed_oracle(self):
        # counts [4, 5, 6]: mean 5.0, population std sqrt(2/3)
        corpus = [make_dialogue(f"d{i}", n) for i, n in enumerate([4, 5, 6])]
        aggregate = metric_avg_turns(corpus)
        assert aggregate.mean == pytest.approx(5.0, abs=1e-12)
        assert aggregate.std == pytest.approx(math.sqrt(2.0 / 3.0), abs=1e-12)
        assert aggregate.n == 3

    def test_single_dialogue_has_zero_spread(self):
        aggregate = metric_avg_turns([make_dialogue("d0", 7)])
        assert (aggregate.mean, aggregate.std, aggregate.n) == (7.0, 0.0, 1)

    def test_empty_corpus_raises(self):
        with pytest.raises(EmptyCorpus):
            metric_avg_turns([])


class TestHeuristicSatisfaction:
    @pytest.mark.parametrize(
        "termination,accepted,expected",
        [
            ("STOP_ACT", "Happy", 5),
            ("STOP_DECISION", "Happy", 5),
            ("STOP_ACT", None, 3),
            ("STOP_DECISION", None, 3),
            ("TURN_BUDGET", None, 1),
            ("CONNECTOR_ERROR", None, 1),
            ("TURN_BUDGET", "Happy", 1),  # acceptance does not rescue a truncation
            ("", None, 1),
        ],
    )
    def test_five_three_one_rule(self, termination, accepted, expected):
        dialogue = make_dialogue("d0", 4, termination=termination, accepted=accepted)
        assert HeuristicSatisfactionScorer().score(dialogue) == expected

    def test_acceptance_detected_from_user_act_without_metadata(self):
        dialogue = make_dialogue(
            "d0",
            4,
            termination="STOP_ACT",
            user_acts={2: (DialogueAct("Accept", (("item", "Happy"),)),)},
        )
        assert HeuristicSatisfactionScorer().score(dialogue) == 5

    def test_agent_accept_act_does_not_count(self):
        dialogue = make_dialogue(
            "d0",
            4,
            termination="STOP_ACT",
            user_acts={1: (DialogueAct("Accept"),)},  # index 1 is the agent
        )
        assert HeuristicSatisfactionScorer().score(dialogue) == 3


class TestSatisfactionMetric:
    def test_full_score_range_oracle(self):
        # scores {1..5}: mean 3.0, population std sqrt(2)
        corpus = [make_dialogue(f"d{i}", 4) for i in range(5)]
        scorer = FixedScorer({f"d{i}": i + 1 for i in range(5)})
        aggregate, per_dialogue, unscored = metric_user_satisfaction(corpus, scorer)
        assert aggregate.mean == pytest.approx(3.0, abs=1e-12)
        assert aggregate.std == pytest.approx(math.sqrt(2.0), abs=1e-12)
        assert per_dialogue == {f"d{i}": i + 1 for i in range(5)}
        assert unscored == []

    def test_unscored_ids_are_reported(self):
        corpus = [make_dialogue(f"d{i}", 4) for i in range(3)]
        scorer = FixedScorer({"d0": 4, "d1": None, "d2": None})
        aggregate, per_dialogue, unscored = metric_user_satisfaction(corpus, scorer)
        assert aggregate.n == 1
        assert unscored == ["d1", "d2"]

    def test_all_unscored_yields_nan_aggregate(self):
        corpus = [make_dialogue("d0", 4)]
        aggregate, _, unscored = metric_user_satisfaction(corpus, FixedScorer({"d0": None}))
        assert math.isnan(aggregate.mean)
        assert unscored == ["d0"]

    def test_empty_corpus_raises(self):
        with pytest.raises(EmptyCorpus):
            metric_user_satisfaction([], FixedScorer({}))


class TestEvaluateCorpus:
    def corpus(self):
        return [
            make_dialogue("d0", 4, termination="STOP_ACT", accepted="X", agent_id="alpha"),
            make_dialogue("d1", 6, termination="STOP_DECISION", agent_id="alpha"),
            make_dialogue("d2", 6, termination="TURN_BUDGET", agent_id="beta"),
        ]

    def test_aggregates_and_groups(self):
        report = evaluate_corpus(self.corpus())
        assert report.scorer_label == "heuristic"
        assert report.std_kind == "population"
        assert report.aggregates["avg_turns"].mean == pytest.approx(16 / 3)
        # scores: d0=5, d1=3, d2=1 -> mean 3, pstdev sqrt(8/3)
        assert report.aggregates["user_satisfaction"].mean == pytest.approx(3.0)
        assert report.aggregates["user_satisfaction"].std == pytest.approx(math.sqrt(8 / 3))
        assert sorted(report.groups) == ["alpha", "beta"]
        assert report.groups["alpha"]["avg_turns"].mean == pytest.approx(5.0)
        assert report.groups["alpha"]["user_satisfaction"].n == 2
        assert report.groups["beta"]["user_satisfaction"].mean == pytest.approx(1.0)

    def test_per_dialogue_entries(self):
        report = evaluate_corpus(self.corpus())
        assert report.per_dialogue["d0"] == {
            "agent_id": "alpha",
            "turn_count": 4,
            "termination_reason": "STOP_ACT",
            "user_satisfaction": 5,
        }
        assert report.unscored_counts == {"user_satisfaction": 0}

    def test_empty_corpus_raises(self):
        with pytest.raises(EmptyCorpus):
            evaluate_corpus([])

    def test_report_round_trips_through_json(self, tmp_path):
        report = evaluate_corpus(self.corpus())
        path = tmp_path / "report.json"
        save_report(report, path)
        loaded = load_report(path)
        assert loaded.to_obj() == report.to_obj()


class TestRenderTable:
    def test_layout_and_rounding(self):
        report = EvaluationReport(
            scorer_label="heuristic",
            groups={
                "alpha": {
                    "avg_turns": MetricAggregate(5.0, math.sqrt(2 / 3), 3),
                    "user_satisfaction": MetricAggregate(3.333, 1.479, 3),
                },
                "beta": {"avg_turns": MetricAggregate(6.0, 0.0, 1)},
            },
            unscored_counts={"user_satisfaction": 2},
        )
        text = render_report_table(report)
        lines = text.splitlines()
        assert lines[0] == "# satisfaction scorer: heuristic; spread: population std"
        assert lines[1].split() == ["agent", "avg_turns", "user_satisfaction", "n"]
        alpha_row = next(line for line in lines if line.startswith("alpha"))
        assert "5.0 ±0.8" in alpha_row
        assert "3.3 ±1.5" in alpha_row
        beta_row = next(line for line in lines if line.startswith("beta"))
        assert "-" in beta_row.split()
        assert lines[-1] == "# unscored: user_satisfaction=2"

    def test_no_unscored_comment_when_all_scored(self):
        report = EvaluationReport(
            scorer_label="heuristic",
            groups={"a": {"avg_turns": MetricAggregate(4.0, 0.0, 2)}},
            unscored_counts={"user_satisfaction": 0},
        )
        assert "# unscored" not in render_report_table(report)
