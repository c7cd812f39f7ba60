"""Command-line entry points.

Exit codes: 0 on success, 1 on configuration or input errors, 2 when the
command finished but some units of work failed (skipped dialogues,
unscored aspects, failed simulations).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .backend import BackendError, load_backend
from .data_io import (
    FileUnreadable,
    SchemaMismatch,
    SourceSchemaError,
    annotate_dialogue_acts_llm,
    convert_inspired,
    convert_redial,
    load_corpus,
    save_corpus,
    save_manifest,
)
from .errors import ConfigError
from .evaluation import (
    EmptyCorpus,
    EvaluationReport,
    HeuristicSatisfactionScorer,
    LlmJudgeSatisfactionScorer,
    Rubric,
    evaluate_corpus,
    load_report,
    render_report_table,
    save_report,
)
from .runner import RunConfig, run_batch

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_PARTIAL = 2


class _CliParser(argparse.ArgumentParser):
    """Argparse variant whose usage errors exit with the config-error code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _CliParser(prog="crseval", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    commands = parser.add_subparsers(dest="command", required=True)

    simulate = commands.add_parser(
        "simulate", help="run simulated dialogues against a recommender agent"
    )
    simulate.add_argument("--config", required=True, help="run configuration (JSON)")
    simulate.add_argument("--out-dir", help="override the configured output directory")
    simulate.add_argument("--parallelism", type=int, help="override worker count")

    convert = commands.add_parser("convert", help="convert a source corpus to the unified format")
    convert.add_argument("--format", required=True, choices=["redial", "inspired"])
    convert.add_argument("--in", dest="input", required=True, help="source file")
    convert.add_argument("--out", dest="output", required=True, help="unified corpus (JSON)")
    convert.add_argument("--manifest", help="also write a conversion manifest here")

    annotate = commands.add_parser(
        "annotate", help="add dialogue-act annotations to a corpus with an LLM"
    )
    annotate.add_argument("--corpus", required=True, help="unified corpus (JSON)")
    annotate.add_argument("--backend", required=True, help="backend configuration (JSON)")
    annotate.add_argument("--prompt", required=True, help="prompt template file")
    annotate.add_argument("--out", dest="output", required=True)
    annotate.add_argument("--intents", required=True, help="comma-separated intent taxonomy")
    annotate.add_argument("--slots", required=True, help="comma-separated slot taxonomy")

    evaluate = commands.add_parser("evaluate", help="score a corpus and write a report")
    evaluate.add_argument("--corpus", required=True, help="unified corpus (JSON)")
    evaluate.add_argument("--rubric", help="aspect rubric (JSON); enables the LLM judge")
    evaluate.add_argument("--backend", help="backend configuration (JSON), required with --rubric")
    evaluate.add_argument(
        "--scorer",
        choices=["heuristic", "llm"],
        default="heuristic",
        help="user-satisfaction scorer",
    )
    evaluate.add_argument("--out", dest="output", required=True, help="report (JSON)")

    report = commands.add_parser("report", help="render an evaluation report")
    report.add_argument("--in", dest="input", required=True, help="report (JSON)")
    report.add_argument("--format", choices=["table", "json"], default="table")
    return parser


def _cmd_simulate(args) -> int:
    config = RunConfig.from_json_file(args.config)
    overrides = {}
    if args.out_dir:
        # CLI paths resolve against the caller's cwd, unlike paths inside
        # the config file, which resolve against the config's directory.
        overrides["output_dir"] = str(Path(args.out_dir).resolve())
    if args.parallelism:
        overrides["parallelism"] = args.parallelism
    if overrides:
        obj = json.loads(Path(args.config).read_text(encoding="utf-8"))
        obj.update(overrides)
        config = RunConfig.from_obj(obj, base_dir=Path(args.config).resolve().parent)
    corpus_path, manifest = run_batch(config)
    failed = manifest.termination_counts.get("CONNECTOR_ERROR", 0)
    print(f"wrote {manifest.dialogue_count} dialogues to {corpus_path}")
    for reason, count in sorted(manifest.termination_counts.items()):
        print(f"  {reason}: {count}")
    return EXIT_PARTIAL if failed else EXIT_OK


def _cmd_convert(args) -> int:
    converter = convert_redial if args.format == "redial" else convert_inspired
    corpus, manifest = converter(args.input)
    save_corpus(corpus, args.output)
    if args.manifest:
        save_manifest(manifest, args.manifest)
    print(f"wrote {manifest.dialogue_count} dialogues to {args.output}")
    for warning in manifest.conversion_warnings:
        print(f"  warning: {warning}", file=sys.stderr)
    return EXIT_PARTIAL if manifest.conversion_warnings else EXIT_OK


def _cmd_annotate(args) -> int:
    corpus = load_corpus(args.corpus)
    backend = load_backend(args.backend)
    prompt = Path(args.prompt).read_text(encoding="utf-8")
    intents = [s.strip() for s in args.intents.split(",") if s.strip()]
    slots = [s.strip() for s in args.slots.split(",") if s.strip()]
    warnings: list[str] = []
    annotated = [
        annotate_dialogue_acts_llm(
            dialogue,
            backend,
            prompt,
            intents=intents,
            slots=slots,
            warnings=warnings,
        )
        for dialogue in corpus
    ]
    save_corpus(annotated, args.output)
    print(f"annotated {len(annotated)} dialogues -> {args.output}")
    for warning in warnings:
        print(f"  warning: {warning}", file=sys.stderr)
    return EXIT_PARTIAL if warnings else EXIT_OK


def _cmd_evaluate(args) -> int:
    corpus = load_corpus(args.corpus)
    rubric = backend = None
    if args.rubric or args.scorer == "llm":
        if not args.rubric or not args.backend:
            raise ConfigError("--rubric and --backend must be given together")
        rubric = Rubric.from_json_file(args.rubric)
        backend = load_backend(args.backend)
    if args.scorer == "llm":
        scorer = LlmJudgeSatisfactionScorer(rubric, backend)
    else:
        scorer = HeuristicSatisfactionScorer()
    report = evaluate_corpus(corpus, rubric=rubric, backend=backend, satisfaction_scorer=scorer)
    save_report(report, args.output)
    print(f"wrote report for {len(corpus)} dialogues to {args.output}")
    unscored = sum(report.unscored_counts.values())
    if unscored:
        print(f"  {unscored} aspect/dialogue pairs left unscored", file=sys.stderr)
    return EXIT_PARTIAL if unscored else EXIT_OK


def _cmd_report(args) -> int:
    report: EvaluationReport = load_report(args.input)
    if args.format == "json":
        print(json.dumps(report.to_obj(), indent=2, ensure_ascii=False))
    else:
        print(render_report_table(report))
    return EXIT_OK


_COMMANDS = {
    "simulate": _cmd_simulate,
    "convert": _cmd_convert,
    "annotate": _cmd_annotate,
    "evaluate": _cmd_evaluate,
    "report": _cmd_report,
}

_CONFIG_ERRORS = (
    ConfigError,
    EmptyCorpus,
    FileUnreadable,
    SchemaMismatch,
    SourceSchemaError,
    BackendError,
    FileNotFoundError,
    json.JSONDecodeError,
    ValueError,
)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _COMMANDS[args.command](args)
    except _CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
