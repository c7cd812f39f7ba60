#!/usr/bin/env python3
"""End-to-end offline demo: simulate, evaluate, and render a report.

Runs the bundled agenda-based simulator against the cooperative rule-based
agent (no network, no LLM), scores the resulting corpus with the heuristic
satisfaction scorer, and prints the report table.  Everything lands in
out/agenda_demo/ relative to the repository root.
"""

from __future__ import annotations

import sys
from pathlib import Path

from crseval.cli import main

REPO_ROOT = Path(__file__).resolve().parent.parent
RUN_CONFIG = REPO_ROOT / "configs" / "run_agenda_demo.json"
OUT_DIR = REPO_ROOT / "out" / "agenda_demo"


def run() -> int:
    code = main(["simulate", "--config", str(RUN_CONFIG)])
    if code != 0:
        return code

    corpus = OUT_DIR / "dialogues.json"
    report = OUT_DIR / "report.json"
    code = main(["evaluate", "--corpus", str(corpus), "--out", str(report)])
    if code != 0:
        return code

    return main(["report", "--in", str(report)])


if __name__ == "__main__":
    sys.exit(run())
