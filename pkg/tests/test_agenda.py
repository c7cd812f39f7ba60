"""Agenda policy: initialization, the four update situations, stop rule."""

from __future__ import annotations

import random

from crseval import (
    Decision,
    DialogueAct,
    InformationNeed,
    PreferenceModel,
    initialize_agenda,
    update_agenda,
)
from crseval.agenda import DialogueStateSnapshot


def _need(constraints=None, requests=None, targets=()):
    return InformationNeed(
        constraints=constraints or {},
        requests=requests or {},
        target_items=targets,
    )


def _prefs(**ratings):
    initial = {tuple(key.split("__", 1)): value for key, value in ratings.items()}
    return PreferenceModel(seed=0, initial_ratings=initial)


def _update(agenda, agent_acts, state, need, model, collection=None, prefs=None, **kwargs):
    return update_agenda(
        agenda,
        agent_acts,
        state,
        need,
        prefs or PreferenceModel(seed=0),
        collection,
        model,
        kwargs.pop("rng", random.Random(0)),
        **kwargs,
    )


class TestInitialization:
    def test_pop_order_constraints_requests_stop(self, default_model):
        need = _need(
            constraints={"genre": "pop", "artist": "Adele"},
            requests={"album": None, "release_year": None},
        )
        agenda = initialize_agenda(need, default_model)
        assert len(agenda) == 5
        order = agenda.pop_order()
        assert [(a.intent, a.slots) for a in order] == [
            ("Disclose", ("genre",)),
            ("Disclose", ("artist",)),
            ("Inquire", ("album",)),
            ("Inquire", ("release_year",)),
            ("Bye", ()),
        ]
        assert order[0].value_of("genre") == "pop"

    def test_empty_need_plans_only_stop(self, default_model):
        agenda = initialize_agenda(_need(), default_model)
        assert [a.intent for a in agenda.pop_order()] == ["Bye"]


class TestElicitation:
    def test_elicited_constraint_is_disclosed_with_value(self, default_model):
        need = _need(constraints={"genre": "pop", "artist": "Adele"})
        agenda = initialize_agenda(need, default_model)
        state = DialogueStateSnapshot()
        emitted, agenda, state = _update(
            agenda, [DialogueAct("Elicit", (("artist", None),))], state, need, default_model
        )
        assert emitted == [DialogueAct("Disclose", (("artist", "Adele"),))]
        assert state.disclosed_slots == {"artist"}

    def test_elicited_unconstrained_slot_uses_liked_target_value(
        self, default_model, music_collection
    ):
        need = _need(constraints={"genre": "pop"}, targets=("m001",))
        agenda = initialize_agenda(need, default_model)
        state = DialogueStateSnapshot()
        prefs = _prefs(album__GIRL=0.0)
        prefs._ratings[("album", "G I R L")] = 1.0
        emitted, _, _ = _update(
            agenda,
            [DialogueAct("Elicit", (("album", None),))],
            state,
            need,
            default_model,
            collection=music_collection,
            prefs=prefs,
        )
        assert emitted == [DialogueAct("Disclose", (("album", "G I R L"),))]

    def test_elicited_slot_without_likeable_value_discloses_bare(
        self, default_model, music_collection
    ):
        need = _need(constraints={"genre": "pop"}, targets=("m001",))
        agenda = initialize_agenda(need, default_model)
        state = DialogueStateSnapshot()
        prefs = PreferenceModel(seed=0, initial_ratings={("album", "G I R L"): -1.0})
        emitted, _, _ = _update(
            agenda,
            [DialogueAct("Elicit", (("album", None),))],
            state,
            need,
            default_model,
            collection=music_collection,
            prefs=prefs,
        )
        assert emitted == [DialogueAct("Disclose", (("album", None),))]

    def test_already_disclosed_slot_not_repeated(self, default_model):
        need = _need(constraints={"genre": "pop", "artist": "Adele"})
        agenda = initialize_agenda(need, default_model)
        state = DialogueStateSnapshot(disclosed_slots={"genre"})
        emitted, _, _ = _update(
            agenda, [DialogueAct("Elicit", (("genre", None),))], state, need, default_model
        )
        # the stale planned disclose for genre is discarded, artist comes out
        assert emitted == [DialogueAct("Disclose", (("artist", "Adele"),))]


class TestRecommendation:
    def test_target_recommendation_accepted(self, default_model, music_collection):
        need = _need(constraints={"genre": "pop"}, targets=("m001",))
        agenda = initialize_agenda(need, default_model)
        state = DialogueStateSnapshot(disclosed_slots={"genre"})
        emitted, _, state = _update(
            agenda,
            [DialogueAct("Recommend", (("item", "Happy"),))],
            state,
            need,
            default_model,
            collection=music_collection,
        )
        assert emitted == [DialogueAct("Accept", (("item", "Happy"),))]
        assert state.recommended == [("Happy", Decision.ACCEPT)]
        assert state.accepted_items() == ["Happy"]

    def test_constraint_violation_rejected_with_critique(self, default_model, music_collection):
        need = _need(constraints={"genre": "pop"}, targets=("m001",))
        agenda = initialize_agenda(need, default_model)
        state = DialogueStateSnapshot(disclosed_slots={"genre"})
        emitted, _, state = _update(
            agenda,
            [DialogueAct("Recommend", (("item", "Bohemian Rhapsody"),))],
            state,
            need,
            default_model,
            collection=music_collection,
        )
        assert emitted == [
            DialogueAct("Reject", (("item", "Bohemian Rhapsody"), ("genre", "pop")))
        ]
        assert state.recommended == [("Bohemian Rhapsody", Decision.REJECT)]

    def test_unresolved_reference_rejected_neutrally(self, default_model, music_collection):
        need = _need(constraints={"genre": "pop"}, targets=("m001",))
        agenda = initialize_agenda(need, default_model)
        state = DialogueStateSnapshot(disclosed_slots={"genre"})
        emitted, _, state = _update(
            agenda,
            [DialogueAct("Recommend", (("item", "Imaginary Song"),))],
            state,
            need,
            default_model,
            collection=music_collection,
        )
        assert emitted == [DialogueAct("Reject", (("item", "Imaginary Song"),))]
        assert state.recommended == [("Imaginary Song", Decision.REJECT)]


class TestInquiryResponse:
    def test_matching_inform_fulfills_request_and_clears_agenda(self, default_model):
        need = _need(requests={"release_year": None})
        agenda = initialize_agenda(need, default_model)
        state = DialogueStateSnapshot()
        emitted, agenda, state = _update(
            agenda,
            [DialogueAct("Inform", (("release_year", "2013"),))],
            state,
            need,
            default_model,
        )
        assert state.fulfilled_requests == {"release_year"}
        # the planned inquire was removed; with no targets the stop is coherent
        assert emitted == [DialogueAct("Bye")]

    def test_unrelated_inform_still_counts_as_answer(self, default_model):
        need = _need(
            constraints={"genre": "pop"}, requests={"release_year": None}, targets=("m1",)
        )
        agenda = initialize_agenda(need, default_model)
        state = DialogueStateSnapshot()
        _, _, state = _update(
            agenda, [DialogueAct("Inform", (("mood", "happy"),))], state, need, default_model
        )
        assert state.fulfilled_requests == {"release_year"}


class TestOtherAndStopRule:
    def test_other_turn_pops_agenda_in_order(self, default_model):
        need = _need(constraints={"genre": "pop", "artist": "Adele"})
        agenda = initialize_agenda(need, default_model)
        state = DialogueStateSnapshot()
        emitted, _, state = _update(agenda, [], state, need, default_model)
        assert emitted == [DialogueAct("Disclose", (("genre", "pop"),))]
        emitted, _, state = _update(agenda, [DialogueAct("Ack")], state, need, default_model)
        assert emitted == [DialogueAct("Disclose", (("artist", "Adele"),))]

    def test_blocked_stop_emits_sampled_filler(self, default_model):
        need = _need(constraints={"genre": "pop"}, targets=("m1",))
        agenda = initialize_agenda(need, default_model)
        state = DialogueStateSnapshot(disclosed_slots={"genre"})
        agenda.pop()  # drop the planned disclose; only the stop is left
        emitted, agenda, state = _update(agenda, [DialogueAct("Ack")], state, need, default_model)
        assert len(emitted) == 1
        # nothing recommended yet: accept/reject/stop are all off the table
        assert emitted[0].intent in {"Greeting", "Disclose", "Inquire", "Chat"}
        assert agenda.peek() == DialogueAct("Bye")

    def test_stop_coherent_once_plan_complete(self, default_model):
        need = _need(constraints={"genre": "pop"}, targets=("m1",))
        agenda = initialize_agenda(need, default_model)
        agenda.pop()
        state = DialogueStateSnapshot(
            disclosed_slots={"genre"}, recommended=[("Happy", Decision.ACCEPT)]
        )
        emitted, _, _ = _update(agenda, [DialogueAct("Ack")], state, need, default_model)
        assert emitted == [DialogueAct("Bye")]

    def test_turn_budget_overrides_stop_block(self, default_model):
        need = _need(constraints={"genre": "pop"}, targets=("m1",))
        agenda = initialize_agenda(need, default_model)
        agenda.pop()
        state = DialogueStateSnapshot(turn_count=9)
        emitted, _, _ = _update(
            agenda, [DialogueAct("Ack")], state, need, default_model, turn_budget=10
        )
        assert emitted == [DialogueAct("Bye")]

    def test_empty_agenda_replans_stop(self, default_model):
        need = _need(constraints={"genre": "pop"})
        agenda = initialize_agenda(need, default_model)
        agenda.pop()
        agenda.pop()  # agenda fully drained by hand
        state = DialogueStateSnapshot()
        emitted, agenda, _ = _update(agenda, [DialogueAct("Ack")], state, need, default_model)
        # replanned stop is blocked (nothing disclosed), so a filler is emitted
        assert len(agenda) == 1 and agenda.peek().intent == "Bye"
        assert emitted[0].intent != "Bye"

    def test_burst_pops_multiple_acts_but_stop_breaks_it(self, default_model):
        need = _need(constraints={"genre": "pop", "artist": "Adele"})
        agenda = initialize_agenda(need, default_model)
        state = DialogueStateSnapshot()
        emitted, _, state = _update(
            agenda, [DialogueAct("Ack")], state, need, default_model, burst_size=3
        )
        assert [a.intent for a in emitted] == ["Disclose", "Disclose", "Bye"]
        assert state.disclosed_slots == {"genre", "artist"}

    def test_turn_count_advances_per_update(self, default_model):
        need = _need(constraints={"genre": "pop"})
        agenda = initialize_agenda(need, default_model)
        state = DialogueStateSnapshot()
        _, _, state = _update(agenda, [], state, need, default_model)
        _, _, state = _update(agenda, [DialogueAct("Ack")], state, need, default_model)
        assert state.turn_count == 2
        assert state.last_user_intent is not None
