#!/usr/bin/env python3
"""Regenerate the checked-in golden files under tests/fixtures/.

Run this only after an intentional behavior change, then re-inspect the
diffs by hand before committing: the goldens are the acceptance oracle
for converter output and simulation reproducibility.
"""

from __future__ import annotations

import tempfile
from pathlib import Path

from crseval import RunConfig, convert_inspired, convert_redial, run_batch, save_corpus

REPO_ROOT = Path(__file__).resolve().parent.parent
FIXTURE_DIR = REPO_ROOT / "tests" / "fixtures"


def regen_converter_goldens() -> None:
    corpus, _ = convert_redial(FIXTURE_DIR / "redial_mini.jsonl")
    save_corpus(corpus, FIXTURE_DIR / "golden_redial_unified.json")
    corpus, _ = convert_inspired(FIXTURE_DIR / "inspired_mini.tsv")
    save_corpus(corpus, FIXTURE_DIR / "golden_inspired_unified.json")


def regen_transcript_golden() -> None:
    out_dir = Path(tempfile.mkdtemp()) / "golden"
    config = RunConfig(
        simulator={
            "kind": "AGENDA",
            "interaction_model": str(REPO_ROOT / "configs" / "interaction_model_default.json"),
            "template_store": str(REPO_ROOT / "configs" / "templates_default.json"),
        },
        connector={"kind": "RULE_BASED", "cooperative": True, "label": "cooperative-mock"},
        item_collection_path=str(REPO_ROOT / "data" / "items_music.json"),
        need_source={"kind": "GENERATED", "n_constraints": 2, "n_requests": 1},
        num_dialogues=2,
        max_turns=20,
        master_seed=97,
        output_dir=str(out_dir),
        domain_slots=("genre", "artist", "album", "release_year"),
        parallelism=1,
    )
    corpus_path, _ = run_batch(config)
    (FIXTURE_DIR / "golden_transcript.json").write_bytes(corpus_path.read_bytes())


if __name__ == "__main__":
    regen_converter_goldens()
    regen_transcript_golden()
    print("regenerated goldens in", FIXTURE_DIR)
