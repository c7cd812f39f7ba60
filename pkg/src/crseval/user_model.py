"""User-side modeling: information needs, personas, and item preferences."""

from __future__ import annotations

import hashlib
import logging
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping, TYPE_CHECKING

if TYPE_CHECKING:  # pragma: no cover
    from .data_io import Item, ItemCollection

logger = logging.getLogger(__name__)


class InsufficientProperties(Exception):
    """No item in the collection has enough populated slots for the requested need."""


@dataclass(frozen=True)
class InformationNeed:
    """What the simulated user is after.

    ``constraints`` are slot-value pairs the user insists on; ``requests``
    are slots the user wants to learn about (value filled once answered);
    ``target_items`` are ids of items the user would ideally end up with.
    Constraint and request slots are disjoint: requests overlapping a
    constraint slot are dropped at construction with a logged warning.
    """

    constraints: dict[str, str] = field(default_factory=dict)
    requests: dict[str, str | None] = field(default_factory=dict)
    target_items: tuple[str, ...] = ()

    def __post_init__(self):
        requests = dict(self.requests)
        overlap = [slot for slot in requests if slot in self.constraints]
        for slot in overlap:
            logger.warning("request slot %r overlaps a constraint; dropping the request", slot)
            del requests[slot]
        object.__setattr__(self, "constraints", dict(self.constraints))
        object.__setattr__(self, "requests", requests)
        object.__setattr__(self, "target_items", tuple(self.target_items))

    @property
    def constraint_slots(self) -> tuple[str, ...]:
        return tuple(self.constraints)

    @property
    def request_slots(self) -> tuple[str, ...]:
        return tuple(self.requests)


def need_to_obj(need: InformationNeed) -> dict[str, Any]:
    return {
        "constraints": dict(need.constraints),
        "requests": dict(need.requests),
        "target_items": list(need.target_items),
    }


def need_from_obj(obj: Mapping[str, Any]) -> InformationNeed:
    return InformationNeed(
        constraints={str(k): str(v) for k, v in obj.get("constraints", {}).items()},
        requests={str(k): (None if v is None else str(v)) for k, v in obj.get("requests", {}).items()},
        target_items=tuple(str(t) for t in obj.get("target_items", [])),
    )


@dataclass(frozen=True)
class Persona:
    """Free-form user attributes (e.g. patience, verbosity) used for prompting."""

    attributes: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "attributes", dict(self.attributes))


RATING_LEVELS = (-1.0, -0.5, 0.0, 0.5, 1.0)


class PreferenceModel:
    """Seeded slot-value preferences on a five-point scale in [-1, 1].

    Ratings are drawn lazily: the first query of an unseen (slot, value)
    pair hashes (seed, slot, value) onto the five-point scale and caches
    the result, so repeat queries are consistent and two models with the
    same seed agree everywhere.
    """

    def __init__(
        self,
        seed: int,
        domain_slots: Iterable[str] = (),
        initial_ratings: Mapping[tuple[str, str], float] | None = None,
    ):
        self.seed = seed
        self.domain_slots = tuple(domain_slots)
        self._ratings: dict[tuple[str, str], float] = dict(initial_ratings or {})
        for rating in self._ratings.values():
            if not -1.0 <= rating <= 1.0:
                raise ValueError(f"rating {rating} outside [-1, 1]")

    def rating(self, slot: str, value: str) -> float:
        key = (slot, value)
        cached = self._ratings.get(key)
        if cached is not None:
            return cached
        digest = hashlib.sha256(f"{self.seed}|{slot}|{value}".encode("utf-8")).digest()
        drawn = RATING_LEVELS[int.from_bytes(digest[:8], "big") % len(RATING_LEVELS)]
        self._ratings[key] = drawn
        return drawn


class Decision(str, Enum):
    ACCEPT = "ACCEPT"
    REJECT = "REJECT"


class AssessmentReason(str, Enum):
    TARGET = "TARGET"
    CONSTRAINT_VIOLATION = "CONSTRAINT_VIOLATION"
    PREFERENCE = "PREFERENCE"


@dataclass(frozen=True)
class ItemAssessment:
    decision: Decision
    reason: AssessmentReason
    violated_slots: tuple[str, ...] = ()
    matched_slots: tuple[str, ...] = ()
    preference_mean: float | None = None


def generate_information_need(
    collection: "ItemCollection",
    n_constraints: int,
    n_requests: int,
    rng: random.Random,
) -> InformationNeed:
    """Sample a need whose target item can support it.

    The target is drawn uniformly among items with at least
    ``n_constraints + n_requests`` populated property slots; constraints
    are distinct (slot, value) pairs of the target and requests are
    further distinct slots of it.  Deterministic under a seeded ``rng``.
    """
    if n_constraints < 1:
        raise ValueError("n_constraints must be >= 1")
    if n_requests < 0:
        raise ValueError("n_requests must be >= 0")
    wanted = n_constraints + n_requests
    eligible = [
        item
        for item_id, item in sorted(collection.items.items())
        if sum(1 for values in item.properties.values() if values) >= wanted
    ]
    if not eligible:
        raise InsufficientProperties(
            f"no item has at least {wanted} populated slots"
        )
    target = rng.choice(eligible)
    populated = [slot for slot in collection.domain_slots if target.properties.get(slot)]
    constraint_slots = rng.sample(populated, n_constraints)
    constraints = {slot: rng.choice(target.properties[slot]) for slot in constraint_slots}
    remaining = [slot for slot in populated if slot not in constraints]
    request_slots = rng.sample(remaining, n_requests)
    requests: dict[str, str | None] = {slot: None for slot in request_slots}
    return InformationNeed(constraints=constraints, requests=requests, target_items=(target.item_id,))


def init_preference_model(
    need: InformationNeed,
    collection: "ItemCollection",
    rng: random.Random,
) -> PreferenceModel:
    """Build a preference model consistent with the need.

    Every constraint pair is pre-rated +1.0; everything else is rated
    lazily from a seed drawn off ``rng``.
    """
    seed = rng.randrange(2**62)
    initial = {(slot, value): 1.0 for slot, value in need.constraints.items()}
    return PreferenceModel(seed, domain_slots=collection.domain_slots, initial_ratings=initial)


def assess_item(
    item: "Item",
    need: InformationNeed,
    prefs: PreferenceModel,
    accept_threshold: float = 0.0,
) -> ItemAssessment:
    """Decide whether the user takes an offered item.

    Target items are always accepted; an item carrying a constrained slot
    without the constrained value is always rejected; otherwise the mean
    preference rating over the item's in-domain (slot, value) pairs must
    exceed ``accept_threshold``.
    """
    if item.item_id in need.target_items:
        return ItemAssessment(Decision.ACCEPT, AssessmentReason.TARGET)

    violated: list[str] = []
    matched: list[str] = []
    for slot, value in need.constraints.items():
        item_values = item.properties.get(slot)
        if not item_values:
            continue
        if value in item_values:
            matched.append(slot)
        else:
            violated.append(slot)
    if violated:
        return ItemAssessment(
            Decision.REJECT,
            AssessmentReason.CONSTRAINT_VIOLATION,
            violated_slots=tuple(violated),
            matched_slots=tuple(matched),
        )

    domain = set(prefs.domain_slots) if prefs.domain_slots else None
    ratings = [
        prefs.rating(slot, value)
        for slot, values in item.properties.items()
        if domain is None or slot in domain
        for value in values
    ]
    mean = sum(ratings) / len(ratings) if ratings else 0.0
    decision = Decision.ACCEPT if mean > accept_threshold else Decision.REJECT
    return ItemAssessment(
        decision,
        AssessmentReason.PREFERENCE,
        matched_slots=tuple(matched),
        preference_mean=mean,
    )
