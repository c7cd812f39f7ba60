"""Prompt-based simulators: exact prompt layout and the stop protocol."""

from __future__ import annotations

import pytest

from crseval import (
    Dialogue,
    InformationNeed,
    MockBackend,
    Participant,
    SinglePromptSimulator,
    TurnKind,
    Utterance,
    build_generation_prompt,
    build_stopping_prompt,
)
from crseval.language import EmptyGeneration
from crseval.llm_sim import (
    DualPromptSimulator,
    PromptSpec,
    dual_prompt_turn,
    render_information_need,
    single_prompt_turn,
)
from crseval.user_model import Persona

NEED = InformationNeed(
    constraints={"genre": "pop", "artist": "Pharrell Williams"},
    requests={"release_year": None},
    target_items=("m001",),
)
PERSONA = Persona(attributes={"age": "27", "mood": "curious"})


def _history(*texts: str) -> Dialogue:
    participants = [Participant.USER, Participant.AGENT]
    return Dialogue(
        dialogue_id="h1",
        utterances=[
            Utterance(participant=participants[i % 2], text=text, turn_index=i)
            for i, text in enumerate(texts)
        ],
    )


class TestPromptLayout:
    def test_need_block_lines(self):
        assert render_information_need(NEED) == (
            "Information need:\n"
            "Constraints:\n"
            "genre: pop\n"
            "artist: Pharrell Williams\n"
            "Requests:\n"
            "release_year: ?\n"
            "Targets:\n"
            "m001"
        )

    def test_generation_prompt_exact_bytes(self):
        spec = PromptSpec(task_description="Act as a music seeker.", need=NEED, persona=PERSONA)
        prompt = build_generation_prompt(spec, _history("hi", "hello! what do you like?"))
        assert prompt == (
            "Act as a music seeker.\n"
            "\n"
            "Persona:\n"
            "age: 27\n"
            "mood: curious\n"
            "\n"
            "Information need:\n"
            "Constraints:\n"
            "genre: pop\n"
            "artist: Pharrell Williams\n"
            "Requests:\n"
            "release_year: ?\n"
            "Targets:\n"
            "m001\n"
            "\n"
            "Conversation history:\n"
            "USER: hi\n"
            "ASSISTANT: hello! what do you like?\n"
            "\n"
            "Write the next USER message."
        )

    def test_persona_and_history_blocks_omitted_entirely(self):
        spec = PromptSpec(task_description="Task.", need=NEED)
        prompt = build_generation_prompt(spec, _history())
        assert "Persona:" not in prompt
        assert "Conversation history:" not in prompt
        assert prompt.startswith("Task.\n\nInformation need:")
        assert prompt.endswith("\n\nWrite the next USER message.")

    def test_section_order_is_stable(self):
        spec = PromptSpec(task_description="Task.", need=NEED, persona=PERSONA)
        prompt = build_generation_prompt(spec, _history("hi"))
        positions = [
            prompt.index("Task."),
            prompt.index("Persona:"),
            prompt.index("Information need:"),
            prompt.index("Conversation history:"),
            prompt.index("Write the next USER message."),
        ]
        assert positions == sorted(positions)

    def test_stopping_prompt_omits_need_and_requires_stop_task(self):
        spec = PromptSpec(
            task_description="Task.",
            need=NEED,
            persona=PERSONA,
            stop_task_description="Decide if the user is done.",
        )
        prompt = build_stopping_prompt(spec, _history("hi", "hello"))
        assert prompt == (
            "Decide if the user is done.\n"
            "\n"
            "Persona:\n"
            "age: 27\n"
            "mood: curious\n"
            "\n"
            "Conversation history:\n"
            "USER: hi\n"
            "ASSISTANT: hello\n"
            "\n"
            "Answer with a single word: CONTINUE or STOP."
        )
        assert "Information need" not in prompt
        with pytest.raises(ValueError):
            build_stopping_prompt(PromptSpec(task_description="T.", need=NEED), _history())


class TestSinglePromptTurn:
    def test_generates_user_utterance(self):
        spec = PromptSpec(task_description="Task.", need=NEED)
        backend = MockBackend(["I want something upbeat."])
        output = single_prompt_turn(spec, _history("a", "b"), backend)
        assert output.kind is TurnKind.UTTERANCE
        assert output.utterance.text == "I want something upbeat."
        assert output.utterance.participant is Participant.USER
        assert output.utterance.turn_index == 2

    def test_echoed_role_tag_stripped(self):
        spec = PromptSpec(task_description="Task.", need=NEED)
        backend = MockBackend(["  USER: I want pop.  "])
        output = single_prompt_turn(spec, _history(), backend)
        assert output.utterance.text == "I want pop."

    def test_empty_replies_retried_then_error(self):
        spec = PromptSpec(task_description="Task.", need=NEED)
        backend = MockBackend(["", "", ""])
        with pytest.raises(EmptyGeneration):
            single_prompt_turn(spec, _history(), backend, max_retries=2)
        assert len(backend.call_log) == 3


class TestDualPromptTurn:
    def _spec(self) -> PromptSpec:
        return PromptSpec(
            task_description="Task.",
            need=NEED,
            stop_task_description="Stop task.",
            default_stop_utterance="Bye now!",
        )

    def test_stop_reply_short_circuits_generation(self):
        backend = MockBackend([("CONTINUE or STOP", "STOP")])
        output = dual_prompt_turn(self._spec(), _history("a", "b"), backend)
        assert output.kind is TurnKind.STOP
        assert output.utterance is None
        assert [entry.tag for entry in backend.call_log] == ["simulator.stop_decision"]

    def test_continue_falls_through_to_generation(self):
        backend = MockBackend(
            [("CONTINUE or STOP", "continue."), ("Write the next USER message.", "More jazz please.")]
        )
        output = dual_prompt_turn(self._spec(), _history("a", "b"), backend)
        assert output.kind is TurnKind.UTTERANCE
        assert output.utterance.text == "More jazz please."
        assert [entry.tag for entry in backend.call_log] == [
            "simulator.stop_decision",
            "simulator.generate",
        ]

    def test_first_token_wins_case_insensitively(self):
        backend = MockBackend(["I think I will Stop here, not continue."])
        output = dual_prompt_turn(self._spec(), _history("a"), backend)
        assert output.kind is TurnKind.STOP

    def test_undecidable_counts_as_continue_with_warning(self):
        backend = MockBackend(["hmm", "dunno", "maybe", "sure thing"])
        warnings: list[str] = []
        output = dual_prompt_turn(
            self._spec(), _history("a"), backend, max_retries=2, warnings=warnings
        )
        assert output.kind is TurnKind.UTTERANCE
        assert any("undecidable" in w for w in warnings)

    def test_generation_prompt_identical_to_single_prompt_path(self):
        spec = self._spec()
        history = _history("hi", "hello")
        sp_backend = MockBackend(["x"])
        single_prompt_turn(spec, history, sp_backend)
        dp_backend = MockBackend([("CONTINUE or STOP", "CONTINUE"), "y"])
        dual_prompt_turn(spec, history, dp_backend)
        generate_digests = [
            entry.prompt_digest for entry in dp_backend.call_log if entry.tag == "simulator.generate"
        ]
        assert generate_digests == [sp_backend.call_log[0].prompt_digest]


class TestSimulatorClasses:
    def test_single_prompt_simulator(self):
        spec = PromptSpec(task_description="Task.", need=NEED)
        simulator = SinglePromptSimulator(spec, MockBackend(["hello"]))
        assert simulator.kind == "LLM_SP"
        assert simulator.next_user_turn(_history()).utterance.text == "hello"

    def test_dual_prompt_simulator_requires_stop_task(self):
        spec = PromptSpec(task_description="Task.", need=NEED)
        with pytest.raises(ValueError):
            DualPromptSimulator(spec, MockBackend([]))

    def test_dual_prompt_simulator_surfaces_stop(self):
        simulator = DualPromptSimulator(self._spec(), MockBackend(["STOP"]))
        assert simulator.default_stop_utterance == "Bye now!"
        assert simulator.next_user_turn(_history("a")).kind is TurnKind.STOP

    def _spec(self) -> PromptSpec:
        return PromptSpec(
            task_description="Task.",
            need=NEED,
            stop_task_description="Stop task.",
            default_stop_utterance="Bye now!",
        )
