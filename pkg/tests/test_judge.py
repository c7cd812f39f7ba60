"""LLM-as-a-judge scoring: prompt content, reply parsing, retry policy."""

from __future__ import annotations

import logging

import pytest

from crseval import (
    Aspect,
    AspectScore,
    Dialogue,
    LlmJudgeSatisfactionScorer,
    MockBackend,
    Participant,
    Rubric,
    RubricAspect,
    Utterance,
    judge_dialogue,
)
from crseval.evaluation import _judge_prompt

from conftest import CONFIG_DIR


def make_rubric() -> Rubric:
    return Rubric(
        {
            aspect: RubricAspect(
                aspect=aspect,
                definition=f"How well the conversation does on {aspect.value.lower()}.",
                descriptors={k: f"level {k} for {aspect.value.lower()}" for k in range(1, 6)},
            )
            for aspect in Aspect
        }
    )


def make_dialogue() -> Dialogue:
    dialogue = Dialogue(dialogue_id="d0", agent_id="agent-a", user_id="sim")
    dialogue.utterances.append(
        Utterance(participant=Participant.USER, text="suggest something upbeat", turn_index=0)
    )
    dialogue.utterances.append(
        Utterance(participant=Participant.AGENT, text="How about Happy?", turn_index=1)
    )
    return dialogue


def scripted_judge(replies_by_aspect: dict[Aspect, list[str]]) -> MockBackend:
    script = []
    for aspect, replies in replies_by_aspect.items():
        for reply in replies:
            script.append((f"Aspect: {aspect.value}", reply))
    return MockBackend(script)


ALL_FOUR = {
    aspect: ["SCORE: 4"]
    for aspect in Aspect
}


class TestRubric:
    def test_requires_all_aspects(self):
        aspects = {
            Aspect.FLUENCY: RubricAspect(
                Aspect.FLUENCY, "def", {k: str(k) for k in range(1, 6)}
            )
        }
        with pytest.raises(ValueError, match="missing aspects"):
            Rubric(aspects)

    def test_descriptors_must_cover_one_to_five(self):
        with pytest.raises(ValueError, match="descriptors"):
            RubricAspect(Aspect.FLUENCY, "def", {1: "a", 2: "b"})

    def test_bundled_rubric_loads(self):
        rubric = Rubric.from_json_file(CONFIG_DIR / "rubric_default.json")
        assert set(rubric.aspects) == set(Aspect)
        assert sorted(rubric.aspects[Aspect.FLUENCY].descriptors) == [1, 2, 3, 4, 5]


class TestJudgePrompt:
    def test_contains_definition_descriptors_and_conversation(self):
        rubric = make_rubric()
        prompt = _judge_prompt(make_dialogue(), rubric.aspects[Aspect.FLUENCY])
        assert "Aspect: FLUENCY" in prompt
        assert "How well the conversation does on fluency." in prompt
        for k in range(1, 6):
            assert f"{k}: level {k} for fluency" in prompt
        assert "USER: suggest something upbeat" in prompt
        assert "ASSISTANT: How about Happy?" in prompt
        assert "SCORE: <integer 1-5>" in prompt


class TestJudgeDialogue:
    def test_all_aspects_scored_with_one_call_each(self):
        backend = scripted_judge(ALL_FOUR)
        scores = judge_dialogue(make_dialogue(), make_rubric(), backend)
        assert len(scores) == 5
        assert {s.aspect for s in scores} == set(Aspect)
        assert all(s.score == 4 for s in scores)
        assert [entry.tag for entry in backend.call_log] == [
            f"judge.{aspect.value}" for aspect in Aspect
        ]
        assert all(entry.outcome == "ok" for entry in backend.call_log)

    def test_judge_calls_use_parse_temperature(self):
        class RecordingBackend(MockBackend):
            def __init__(self, script):
                super().__init__(script)
                self.seen = []

            def complete(self, request):
                self.seen.append(request)
                return super().complete(request)

        backend = RecordingBackend([("Aspect:", "SCORE: 4")] * 5)
        judge_dialogue(make_dialogue(), make_rubric(), backend)
        assert len(backend.seen) == 5
        assert all(request.temperature == 0.0 for request in backend.seen)

    @pytest.mark.parametrize(
        "reply,score,rationale",
        [
            ("SCORE: 3", 3, None),
            ("score: 5", 5, None),
            ("SCORE:2", 2, None),
            ("Thinking...\nSCORE: 1\nRATIONALE: too curt", 1, "too curt"),
            ("SCORE: 4  RATIONALE: smooth and on-topic", 4, "smooth and on-topic"),
        ],
    )
    def test_reply_parse_variants(self, reply, score, rationale):
        replies = {aspect: ["SCORE: 3"] for aspect in Aspect}
        replies[Aspect.FLUENCY] = [reply]
        scores = judge_dialogue(make_dialogue(), make_rubric(), scripted_judge(replies))
        fluency = next(s for s in scores if s.aspect is Aspect.FLUENCY)
        assert fluency.score == score
        assert fluency.rationale == rationale

    def test_out_of_range_reply_is_retried(self):
        replies = {aspect: ["SCORE: 3"] for aspect in Aspect}
        replies[Aspect.FLUENCY] = ["SCORE: 7", "SCORE: 2"]
        backend = scripted_judge(replies)
        scores = judge_dialogue(make_dialogue(), make_rubric(), backend)
        fluency = next(s for s in scores if s.aspect is Aspect.FLUENCY)
        assert fluency.score == 2
        fluency_calls = [e for e in backend.call_log if e.tag == "judge.FLUENCY"]
        assert len(fluency_calls) == 2

    def test_negative_score_is_out_of_range(self):
        replies = {aspect: ["SCORE: 3"] for aspect in Aspect}
        replies[Aspect.FLUENCY] = ["SCORE: -1", "SCORE: 5"]
        scores = judge_dialogue(make_dialogue(), make_rubric(), scripted_judge(replies))
        fluency = next(s for s in scores if s.aspect is Aspect.FLUENCY)
        assert fluency.score == 5

    def test_persistently_malformed_aspect_is_absent(self, caplog):
        replies = {aspect: ["SCORE: 3"] for aspect in Aspect}
        replies[Aspect.CONVERSATIONAL_FLOW] = ["no number here"] * 3
        backend = scripted_judge(replies)
        with caplog.at_level(logging.WARNING):
            scores = judge_dialogue(make_dialogue(), make_rubric(), backend, max_retries=2)
        assert {s.aspect for s in scores} == set(Aspect) - {Aspect.CONVERSATIONAL_FLOW}
        flow_calls = [e for e in backend.call_log if e.tag == "judge.CONVERSATIONAL_FLOW"]
        assert len(flow_calls) == 3  # 1 + max_retries attempts
        assert any("CONVERSATIONAL_FLOW unscored" in r.getMessage() for r in caplog.records)

    def test_aspect_score_validates_range(self):
        with pytest.raises(ValueError):
            AspectScore(aspect=Aspect.FLUENCY, score=0)
        with pytest.raises(ValueError):
            AspectScore(aspect=Aspect.FLUENCY, score=6)


class TestSatisfactionViaJudge:
    def test_maps_overall_satisfaction(self):
        replies = {aspect: ["SCORE: 3"] for aspect in Aspect}
        replies[Aspect.OVERALL_SATISFACTION] = ["SCORE: 5"]
        scorer = LlmJudgeSatisfactionScorer(make_rubric(), scripted_judge(replies))
        assert scorer.label == "llm_judge"
        assert scorer.score(make_dialogue()) == 5

    def test_backend_failure_gives_none(self):
        scorer = LlmJudgeSatisfactionScorer(make_rubric(), MockBackend([]))
        assert scorer.score(make_dialogue()) is None

    def test_unscorable_overall_gives_none(self):
        replies = {aspect: ["SCORE: 3"] for aspect in Aspect}
        replies[Aspect.OVERALL_SATISFACTION] = ["garbage"] * 3
        scorer = LlmJudgeSatisfactionScorer(make_rubric(), scripted_judge(replies))
        assert scorer.score(make_dialogue()) is None
