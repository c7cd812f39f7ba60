"""Item catalogs, corpus files, dataset converters, and LLM-backed augmentation."""

from __future__ import annotations

import csv
import io
import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .dialogue import (
    Dialogue,
    DialogueAct,
    MalformedActString,
    Participant,
    Utterance,
    dialogue_from_obj,
    dialogue_to_obj,
    parse_dialogue_acts,
    render_history_lines,
)
from .user_model import InformationNeed

logger = logging.getLogger(__name__)

MULTI_VALUE_DELIMITER = ";"


class FileUnreadable(Exception):
    """The input file is missing or cannot be read/decoded."""


class SchemaMismatch(Exception):
    """A tabular item file does not carry the expected columns."""


class SourceSchemaError(Exception):
    """A source-corpus file or record does not match the expected schema."""


class ExtractionUnparseable(Exception):
    """The backend reply could not be parsed as an information need."""


# ---------------------------------------------------------------------------
# Items
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Item:
    """One recommendable item with multi-valued properties per slot."""

    item_id: str
    name: str
    properties: dict[str, list[str]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.item_id:
            raise ValueError("item_id must be non-empty")
        object.__setattr__(
            self,
            "properties",
            {slot: list(values) for slot, values in self.properties.items()},
        )


class ItemCollection:
    """An item catalog restricted to a fixed set of domain slots."""

    def __init__(self, items: Iterable[Item], domain_slots: Sequence[str]):
        self.domain_slots: tuple[str, ...] = tuple(domain_slots)
        allowed = set(self.domain_slots)
        self.items: dict[str, Item] = {}
        for item in items:
            unknown = [slot for slot in item.properties if slot not in allowed]
            if unknown:
                raise ValueError(
                    f"item {item.item_id!r} uses slots outside the domain: {unknown}"
                )
            self.items[item.item_id] = item
        self._by_name = {item.name: item for item in self.items.values()}
        self._by_folded_name = {item.name.casefold(): item for item in self.items.values()}

    def __len__(self) -> int:
        return len(self.items)

    def resolve_reference(self, reference: str) -> Item | None:
        """Find an item by id, exact name, or case-insensitive name."""
        item = self.items.get(reference)
        if item is not None:
            return item
        item = self._by_name.get(reference)
        if item is not None:
            return item
        return self._by_folded_name.get(reference.casefold())


def _items_from_json(payload: Any, path: Path, warnings: list[str]) -> tuple[list[Item], list[str]]:
    if not isinstance(payload, list):
        raise SchemaMismatch(f"{path}: expected a top-level list of items")
    raw_items: list[Item] = []
    slot_order: list[str] = []
    for i, obj in enumerate(payload):
        try:
            properties = {
                str(slot): [str(v) for v in (values if isinstance(values, list) else [values])]
                for slot, values in obj.get("properties", {}).items()
            }
            item = Item(str(obj["item_id"]), str(obj.get("name", "")), properties)
        except (KeyError, TypeError, AttributeError, ValueError) as exc:
            warnings.append(f"item entry {i} skipped: {exc}")
            continue
        for slot in item.properties:
            if slot not in slot_order:
                slot_order.append(slot)
        raw_items.append(item)
    return raw_items, slot_order


def _items_from_table(
    text: str, path: Path, domain_slots: Sequence[str] | None, warnings: list[str]
) -> tuple[list[Item], list[str]]:
    sample = text.splitlines()[0] if text.splitlines() else ""
    delimiter = "\t" if "\t" in sample else ","
    reader = csv.reader(io.StringIO(text), delimiter=delimiter)
    rows = [row for row in reader if row and any(cell.strip() for cell in row)]
    if not rows:
        raise SchemaMismatch(f"{path}: empty table, header row required")
    header = [cell.strip() for cell in rows[0]]
    if len(header) < 2 or header[0] != "item_id" or header[1] != "name":
        raise SchemaMismatch(f"{path}: header must start with item_id,name")

    pair_layout = len(header) == 3 and header[2] == "properties"
    if pair_layout:
        slot_order: list[str] = list(domain_slots or [])
    else:
        slot_order = header[2:]
        if domain_slots is not None:
            missing = [slot for slot in domain_slots if slot not in header[2:]]
            if missing:
                raise SchemaMismatch(f"{path}: header missing declared slots {missing}")

    items: list[Item] = []
    for line_no, row in enumerate(rows[1:], start=2):
        properties: dict[str, list[str]] = {}
        if pair_layout:
            cell = row[2] if len(row) > 2 else ""
            for pair in cell.split(MULTI_VALUE_DELIMITER):
                pair = pair.strip()
                if not pair:
                    continue
                if "=" not in pair:
                    warnings.append(f"line {line_no}: property {pair!r} lacks '=', skipped")
                    continue
                slot, value = pair.split("=", 1)
                properties.setdefault(slot.strip(), []).append(value.strip())
                if slot.strip() not in slot_order:
                    slot_order.append(slot.strip())
        else:
            for slot, cell in zip(header[2:], row[2:]):
                values = [v.strip() for v in cell.split(MULTI_VALUE_DELIMITER) if v.strip()]
                if values:
                    properties[slot] = values
        try:
            items.append(Item(row[0].strip(), row[1].strip(), properties))
        except ValueError as exc:
            warnings.append(f"line {line_no}: item skipped: {exc}")
    return items, slot_order


def load_item_collection(
    path: str | Path,
    domain_slots: Sequence[str] | None = None,
    warnings: list[str] | None = None,
) -> ItemCollection:
    """Load items from a JSON list or a delimited table with a header row.

    Tabular files either carry one column per slot (every declared domain
    slot must appear, else :class:`SchemaMismatch`) or a single
    ``properties`` column holding ``slot=value`` pairs separated by ``;``.
    Multi-valued cells split on ``;``.  Duplicate item ids keep the first
    occurrence; skipped entries are reported through ``warnings``.
    """
    path = Path(path)
    sink = warnings if warnings is not None else []
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise FileUnreadable(f"cannot read {path}: {exc}") from exc

    stripped = text.lstrip()
    if stripped.startswith("[") or stripped.startswith("{"):
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaMismatch(f"{path}: invalid JSON: {exc}") from exc
        raw_items, inferred_slots = _items_from_json(payload, path, sink)
    else:
        raw_items, inferred_slots = _items_from_table(text, path, domain_slots, sink)

    slots = tuple(domain_slots) if domain_slots is not None else tuple(inferred_slots)
    allowed = set(slots)
    deduped: dict[str, Item] = {}
    for item in raw_items:
        if item.item_id in deduped:
            sink.append(f"duplicate item_id {item.item_id!r}: first occurrence kept")
            continue
        bad_slots = [slot for slot in item.properties if slot not in allowed]
        if bad_slots:
            sink.append(
                f"item {item.item_id!r} skipped: slots outside the domain {bad_slots}"
            )
            continue
        deduped[item.item_id] = item
    for message in sink:
        logger.warning("%s: %s", path.name, message)
    return ItemCollection(deduped.values(), slots)


# ---------------------------------------------------------------------------
# Corpus files
# ---------------------------------------------------------------------------


@dataclass
class CorpusManifest:
    """Provenance and bookkeeping for a converted or generated corpus."""

    source_name: str
    dialogue_count: int
    annotation_kinds: list[str] = field(default_factory=list)
    conversion_warnings: list[str] = field(default_factory=list)
    termination_counts: dict[str, int] = field(default_factory=dict)

    def to_obj(self) -> dict[str, Any]:
        return {
            "source_name": self.source_name,
            "dialogue_count": self.dialogue_count,
            "annotation_kinds": list(self.annotation_kinds),
            "conversion_warnings": list(self.conversion_warnings),
            "termination_counts": dict(sorted(self.termination_counts.items())),
        }


def corpus_to_json(dialogues: Sequence[Dialogue]) -> str:
    """Serialize a corpus deterministically (stable key order, trailing newline)."""
    payload = [dialogue_to_obj(d) for d in dialogues]
    return json.dumps(payload, indent=2, ensure_ascii=False) + "\n"


def save_corpus(dialogues: Sequence[Dialogue], path: str | Path) -> None:
    Path(path).write_text(corpus_to_json(dialogues), encoding="utf-8")


def load_corpus(path: str | Path) -> list[Dialogue]:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError) as exc:
        raise FileUnreadable(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SourceSchemaError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(payload, list):
        raise SourceSchemaError(f"{path}: expected a top-level list of dialogues")
    return [dialogue_from_obj(obj) for obj in payload]


def save_manifest(manifest: CorpusManifest, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(manifest.to_obj(), indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


# ---------------------------------------------------------------------------
# ReDial-style conversion
# ---------------------------------------------------------------------------

_MENTION_RE = re.compile(r"@(\d+)")


def _rewrite_mentions(text: str, mentions: Mapping[str, str]) -> tuple[str, list[str]]:
    found: list[str] = []

    def substitute(match: re.Match) -> str:
        item_id = match.group(1)
        title = mentions.get(item_id)
        if title is None:
            return match.group(0)
        found.append(item_id)
        return title

    return _MENTION_RE.sub(substitute, text), found


def convert_redial(source_path: str | Path) -> tuple[list[Dialogue], CorpusManifest]:
    """Convert a line-delimited ReDial-style export to the unified format.

    Seeker (initiator) messages map to USER, recommender (respondent)
    messages to AGENT.  ``@<id>`` mentions are rewritten to the item title
    and recorded under the ``item_mention`` annotation; per-item feedback
    answers land in dialogue metadata as ``feedback.<movie_id>.<field>``.
    Unparseable lines and zero-message conversations are skipped and
    reported in the manifest, never aborting the batch.
    """
    source_path = Path(source_path)
    warnings: list[str] = []
    dialogues: list[Dialogue] = []
    try:
        lines = source_path.read_text(encoding="utf-8").splitlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise FileUnreadable(f"cannot read {source_path}: {exc}") from exc

    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            conversation_id = str(record["conversationId"])
            messages = record["messages"]
            initiator = record["initiatorWorkerId"]
            respondent = record["respondentWorkerId"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            warnings.append(f"line {line_no}: unparseable conversation skipped ({exc})")
            continue
        if not messages:
            warnings.append(f"line {line_no}: conversation {conversation_id} has no messages, skipped")
            continue

        mentions = {str(k): str(v) for k, v in (record.get("movieMentions") or {}).items()}
        metadata: dict[str, str] = {}
        for form, answers_key in (("initiator", "initiatorQuestions"), ("respondent", "respondentQuestions")):
            for movie_id, answers in (record.get(answers_key) or {}).items():
                if not isinstance(answers, Mapping):
                    continue
                for field_name, value in answers.items():
                    metadata[f"feedback.{movie_id}.{form}_{field_name}"] = str(value)

        utterances: list[Utterance] = []
        for idx, message in enumerate(messages):
            text, mentioned = _rewrite_mentions(str(message.get("text", "")), mentions)
            annotations: dict[str, str] = {}
            if mentioned:
                annotations["item_mention"] = MULTI_VALUE_DELIMITER.join(mentioned)
            participant = (
                Participant.USER
                if message.get("senderWorkerId") == initiator
                else Participant.AGENT
            )
            utterances.append(
                Utterance(
                    participant=participant,
                    text=text,
                    annotations=annotations,
                    turn_index=idx,
                )
            )
        dialogues.append(
            Dialogue(
                dialogue_id=conversation_id,
                agent_id=str(respondent),
                user_id=str(initiator),
                utterances=utterances,
                metadata=metadata,
            )
        )

    manifest = CorpusManifest(
        source_name="redial",
        dialogue_count=len(dialogues),
        annotation_kinds=["item_mention", "item_feedback"],
        conversion_warnings=warnings,
    )
    return dialogues, manifest


# ---------------------------------------------------------------------------
# INSPIRED-style conversion
# ---------------------------------------------------------------------------

_INSPIRED_TEXT_COLUMNS = ("text", "utterance")
_INSPIRED_STRATEGY_COLUMNS = ("strategy", "social_strategy", "sociable_strategy", "first_label")
_INSPIRED_MENTION_COLUMNS = ("movies", "movie")
_INSPIRED_ENTITY_COLUMNS = ("genres", "genre", "people", "people_names", "entities")

_SPEAKER_MAP = {"SEEKER": Participant.USER, "RECOMMENDER": Participant.AGENT}


def convert_inspired(source_path: str | Path) -> tuple[list[Dialogue], CorpusManifest]:
    """Convert a delimited INSPIRED-style utterance table to the unified format.

    Rows are grouped by dialog id in row order; SEEKER maps to USER and
    RECOMMENDER to AGENT.  Strategy labels become ``social_strategy``
    annotations; movie columns become ``item_mention`` and the remaining
    entity columns ``entity`` annotations.  Rows with an unknown speaker
    are skipped and reported.
    """
    source_path = Path(source_path)
    warnings: list[str] = []
    try:
        text = source_path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise FileUnreadable(f"cannot read {source_path}: {exc}") from exc

    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise SourceSchemaError(f"{source_path}: missing header row")
    delimiter = "\t" if "\t" in lines[0] else ","
    reader = csv.DictReader(io.StringIO(text), delimiter=delimiter)
    header = [h.strip() for h in (reader.fieldnames or [])]

    def pick(candidates: Sequence[str]) -> str | None:
        for name in candidates:
            if name in header:
                return name
        return None

    id_col = pick(("dialog_id", "dialogue_id"))
    speaker_col = pick(("speaker",))
    text_col = pick(_INSPIRED_TEXT_COLUMNS)
    if id_col is None or speaker_col is None or text_col is None:
        raise SourceSchemaError(
            f"{source_path}: header must include dialog_id, speaker, and text columns"
        )
    strategy_col = pick(_INSPIRED_STRATEGY_COLUMNS)
    mention_cols = [c for c in _INSPIRED_MENTION_COLUMNS if c in header]
    entity_cols = [c for c in _INSPIRED_ENTITY_COLUMNS if c in header]

    grouped: dict[str, list[Utterance]] = {}
    for line_no, row in enumerate(reader, start=2):
        dialog_id = (row.get(id_col) or "").strip()
        if not dialog_id:
            warnings.append(f"line {line_no}: missing dialog id, row skipped")
            continue
        speaker = (row.get(speaker_col) or "").strip().upper()
        participant = _SPEAKER_MAP.get(speaker)
        if participant is None:
            warnings.append(f"line {line_no}: unknown speaker {speaker!r}, row skipped")
            continue
        annotations: dict[str, str] = {}
        if strategy_col:
            strategy = (row.get(strategy_col) or "").strip()
            if strategy:
                annotations["social_strategy"] = strategy
        mentions = [
            v.strip()
            for col in mention_cols
            for v in (row.get(col) or "").split(MULTI_VALUE_DELIMITER)
            if v.strip()
        ]
        if mentions:
            annotations["item_mention"] = MULTI_VALUE_DELIMITER.join(mentions)
        entities = [
            v.strip()
            for col in entity_cols
            for v in (row.get(col) or "").split(MULTI_VALUE_DELIMITER)
            if v.strip()
        ]
        if entities:
            annotations["entity"] = MULTI_VALUE_DELIMITER.join(entities)
        utterances = grouped.setdefault(dialog_id, [])
        utterances.append(
            Utterance(
                participant=participant,
                text=(row.get(text_col) or "").strip(),
                annotations=annotations,
                turn_index=len(utterances),
            )
        )

    if not grouped:
        warnings.append("empty source")
    dialogues = [
        Dialogue(
            dialogue_id=dialog_id,
            agent_id="recommender",
            user_id="seeker",
            utterances=utterances,
        )
        for dialog_id, utterances in grouped.items()
    ]
    manifest = CorpusManifest(
        source_name="inspired",
        dialogue_count=len(dialogues),
        annotation_kinds=["social_strategy", "item_mention", "entity"],
        conversion_warnings=warnings,
    )
    return dialogues, manifest


# ---------------------------------------------------------------------------
# LLM-backed augmentation
# ---------------------------------------------------------------------------


def fill_prompt(template: str, values: Mapping[str, str]) -> str:
    """Substitute ``{name}`` placeholders literally, leaving other braces alone."""
    out = template
    for name, value in values.items():
        out = out.replace("{" + name + "}", value)
    return out


def _acts_for_utterance(
    utterance: Utterance,
    backend,
    prompt_template: str,
    intents: Sequence[str],
    slots: Sequence[str],
    max_retries: int,
    warnings: list[str],
    temperature: float,
) -> tuple[DialogueAct, ...]:
    from .backend import GenerationRequest

    prompt = fill_prompt(
        prompt_template,
        {
            "utterance": utterance.text,
            "intents": ", ".join(intents),
            "slots": ", ".join(slots),
        },
    )
    intent_set = set(intents)
    slot_set = set(slots)
    for _attempt in range(max_retries + 1):
        reply = backend.complete(
            GenerationRequest(prompt=prompt, temperature=temperature, tag="annotate")
        )
        try:
            acts = parse_dialogue_acts(reply.text.strip())
        except MalformedActString:
            continue
        kept: list[DialogueAct] = []
        for act in acts:
            if act.intent not in intent_set:
                warnings.append(
                    f"turn {utterance.turn_index}: intent {act.intent!r} outside the taxonomy, act dropped"
                )
                continue
            if any(slot not in slot_set for slot in act.slots):
                warnings.append(
                    f"turn {utterance.turn_index}: act {act.intent!r} uses out-of-taxonomy slots, act dropped"
                )
                continue
            kept.append(act)
        return tuple(kept)
    warnings.append(
        f"turn {utterance.turn_index}: reply unparseable after {max_retries} retries, no acts attached"
    )
    return ()


def annotate_dialogue_acts_llm(
    dialogue: Dialogue,
    backend,
    prompt_template: str,
    intents: Sequence[str],
    slots: Sequence[str],
    max_retries: int = 2,
    parallelism: int = 1,
    warnings: list[str] | None = None,
) -> Dialogue:
    """Return an annotated copy of ``dialogue``; the input is never mutated.

    One backend call per utterance (plus up to ``max_retries`` re-asks when
    the reply fails to parse as an act string).  Acts outside the declared
    intent/slot taxonomy are dropped with a warning; utterances that stay
    unparseable keep an empty act list.
    """
    sink = warnings if warnings is not None else []
    temperature = 0.0

    def annotate(utt: Utterance) -> tuple[DialogueAct, ...]:
        return _acts_for_utterance(
            utt, backend, prompt_template, intents, slots, max_retries, sink, temperature
        )

    if parallelism > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            all_acts = list(pool.map(annotate, dialogue.utterances))
    else:
        all_acts = [annotate(utt) for utt in dialogue.utterances]

    annotated = [
        Utterance(
            participant=utt.participant,
            text=utt.text,
            dialogue_acts=acts,
            annotations=dict(utt.annotations),
            turn_index=utt.turn_index,
            extra=dict(utt.extra),
        )
        for utt, acts in zip(dialogue.utterances, all_acts)
    ]
    return Dialogue(
        dialogue_id=dialogue.dialogue_id,
        agent_id=dialogue.agent_id,
        user_id=dialogue.user_id,
        utterances=annotated,
        metadata=dict(dialogue.metadata),
        extra=dict(dialogue.extra),
    )


def _extract_json_object(text: str) -> Any:
    start = text.find("{")
    end = text.rfind("}")
    if start < 0 or end <= start:
        raise ValueError("no JSON object found in reply")
    return json.loads(text[start : end + 1])


def extract_information_need_llm(
    dialogue: Dialogue,
    backend,
    prompt_template: str,
    domain_slots: Sequence[str],
    max_retries: int = 2,
    warnings: list[str] | None = None,
) -> InformationNeed:
    """Ask the backend to read an information need off a dialogue.

    The reply must contain a JSON object with ``constraints``, ``requests``
    and ``target_items``.  Slots outside ``domain_slots`` are dropped with
    a warning; request slots overlapping constraints keep the constraint.
    Raises :class:`ExtractionUnparseable` when no reply parses within the
    retry budget.
    """
    from .backend import GenerationRequest

    sink = warnings if warnings is not None else []
    prompt = fill_prompt(
        prompt_template,
        {"dialogue": render_history_lines(dialogue), "slots": ", ".join(domain_slots)},
    )
    allowed = set(domain_slots)
    last_error: Exception | None = None
    for _attempt in range(max_retries + 1):
        reply = backend.complete(GenerationRequest(prompt=prompt, temperature=0.0, tag="extract_need"))
        try:
            obj = _extract_json_object(reply.text)
            constraints_raw = obj.get("constraints", {})
            requests_raw = obj.get("requests", {})
            targets = [str(t) for t in obj.get("target_items", [])]
            if not isinstance(constraints_raw, Mapping) or not isinstance(requests_raw, Mapping):
                raise ValueError("constraints/requests must be JSON objects")
        except (ValueError, json.JSONDecodeError, AttributeError, TypeError) as exc:
            last_error = exc
            continue
        constraints: dict[str, str] = {}
        for slot, value in constraints_raw.items():
            if str(slot) not in allowed:
                sink.append(f"constraint slot {slot!r} outside the domain, dropped")
                continue
            constraints[str(slot)] = str(value)
        requests: dict[str, str | None] = {}
        for slot, value in requests_raw.items():
            slot = str(slot)
            if slot not in allowed:
                sink.append(f"request slot {slot!r} outside the domain, dropped")
                continue
            if slot in constraints:
                sink.append(f"request slot {slot!r} overlaps a constraint, constraint kept")
                continue
            requests[slot] = None if value is None else str(value)
        return InformationNeed(constraints=constraints, requests=requests, target_items=tuple(targets))
    raise ExtractionUnparseable(f"no parseable reply after {max_retries} retries: {last_error}")
