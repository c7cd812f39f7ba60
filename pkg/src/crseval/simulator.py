"""Shared behavioral contract for user simulators."""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum

from .dialogue import Dialogue, DialogueAct, Utterance


class TurnKind(str, Enum):
    UTTERANCE = "UTTERANCE"
    STOP = "STOP"


@dataclass(frozen=True)
class SimulatorTurnOutput:
    """Either the next user utterance, or a bare decision to stop.

    STOP outputs carry no utterance; the runner converts them into the
    configured default stop utterance before closing the dialogue.
    """

    kind: TurnKind
    utterance: Utterance | None = None

    def __post_init__(self):
        if self.kind is TurnKind.UTTERANCE and self.utterance is None:
            raise ValueError("UTTERANCE outputs must carry an utterance")
        if self.kind is TurnKind.STOP and self.utterance is not None:
            raise ValueError("STOP outputs carry no utterance")


class UserSimulator(ABC):
    """One simulated user driving one dialogue.

    Instances are session-scoped: they may carry per-dialogue state and
    must not be shared across dialogues.
    """

    kind: str = "SIMULATOR"
    stop_intent: str | None = None
    default_stop_utterance: str = "Goodbye."

    @abstractmethod
    def next_user_turn(self, history: Dialogue) -> SimulatorTurnOutput:
        """Produce the next user turn given the dialogue so far."""

    def interpret_agent_text(self, text: str) -> tuple[DialogueAct, ...]:
        """Hook for simulators that understand agent replies (NLU); default none."""
        return ()
