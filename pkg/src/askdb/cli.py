"""Command-line interface.

Subcommands: ``catalog`` (print both schema renderings), ``ask`` (answer one
question), ``repl`` (interactive loop), ``eval`` (run a dataset and write a
report). Exit codes: 0 success, 1 usage/configuration error, 2 evaluation
completed with mismatches under --strict.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .catalog import build_catalog, load_annotations, render_compact, render_enriched
from .errors import AskdbError, ConfigError, ReplayMiss
from .evaluation import evaluate, load_dataset
from .gateway import LlmGateway
from .pipeline import BACKENDS, AnswerRecord, PipelineConfig, run_question


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_help(sys.stderr)
        raise _UsageError(message)


def _add_pipeline_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file mirroring the pipeline config")
    parser.add_argument("--record", metavar="TRANSCRIPT", help="record LLM traffic to this JSONL file")
    parser.add_argument("--replay", metavar="TRANSCRIPT", help="replay LLM traffic from this JSONL file")
    parser.add_argument("--backend", choices=BACKENDS)
    parser.add_argument("--no-rewrite", action="store_true")
    parser.add_argument("--no-link", action="store_true")
    parser.add_argument("--no-boost", action="store_true")
    parser.add_argument("--max-attempts", type=int)
    parser.add_argument("--model")
    parser.add_argument("--temperature", type=float)
    parser.add_argument("--prompts", metavar="DIR", help="prompt template directory override")
    parser.add_argument("--annotations", help="column meaning annotation file")
    parser.add_argument("--glossary", help="domain glossary JSON file")
    parser.add_argument("--clock", metavar="'YYYY-MM-DD HH:MM'", help="fixed rewrite timestamp")
    parser.add_argument("--interpreter", help="script backend interpreter path")
    parser.add_argument("--trace-dir", help="write per-question trace JSON here")


def _build_parser() -> _Parser:
    parser = _Parser(prog="askdb", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_catalog = sub.add_parser("catalog", help="print compact and enriched schema renderings")
    p_catalog.add_argument("db")
    p_catalog.add_argument("--annotations")

    p_ask = sub.add_parser("ask", help="answer one question")
    p_ask.add_argument("db")
    p_ask.add_argument("question")
    _add_pipeline_flags(p_ask)

    p_repl = sub.add_parser("repl", help="interactive question loop")
    p_repl.add_argument("db")
    _add_pipeline_flags(p_repl)

    p_eval = sub.add_parser("eval", help="run a JSONL dataset and report execution accuracy")
    p_eval.add_argument("dataset")
    p_eval.add_argument("--report", help="write the JSON report here")
    p_eval.add_argument("--workers", type=int, default=1)
    p_eval.add_argument("--strict", action="store_true",
                        help="exit 2 when any case mismatches")
    _add_pipeline_flags(p_eval)
    return parser


def _config_from_args(args: argparse.Namespace) -> PipelineConfig:
    cfg = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
    stages = replace(cfg.stages)
    if args.no_rewrite:
        stages.rewrite = False
    if args.no_link:
        stages.link = False
    if args.no_boost:
        stages.boost = False
    overrides = {
        "backend": args.backend,
        "max_boost_attempts": args.max_attempts,
        "model_id": args.model,
        "temperature": args.temperature,
        "prompt_dir": args.prompts,
        "annotations_path": args.annotations,
        "glossary_path": args.glossary,
        "current_timestamp": args.clock,
        "interpreter_path": args.interpreter,
        "trace_dir": args.trace_dir,
    }
    cfg = replace(cfg, stages=stages, **{k: v for k, v in overrides.items() if v is not None})
    cfg.validate()
    return cfg


def _gateway_from_args(args: argparse.Namespace, cfg: PipelineConfig) -> LlmGateway:
    if args.record and args.replay:
        raise ConfigError("--record and --replay are mutually exclusive")
    if args.replay:
        mode, path = "replay", args.replay
    elif args.record:
        mode, path = "record", args.record
    else:
        mode, path = "live", None
    return LlmGateway(
        mode,
        model_id=cfg.model_id,
        temperature=cfg.temperature,
        transcript_path=path,
    )


def _print_answer(record: AnswerRecord) -> None:
    if record.final_text:
        print(record.final_text)
    outcome = record.final_outcome
    if outcome is not None and outcome.status == "success":
        columns = outcome.columns or ()
        print(" | ".join(columns))
        for row in outcome.rows or ():
            print(" | ".join("NULL" if v is None else str(v) for v in row))
        if outcome.truncated:
            print("(result truncated)")
    else:
        print(f"failed: {record.failure_reason}")


def _cmd_catalog(args: argparse.Namespace) -> int:
    annotations = load_annotations(args.annotations) if args.annotations else None
    catalog = build_catalog(args.db, annotations)
    print("# Compact")
    print(render_compact(catalog))
    print()
    print("# Enriched")
    print(render_enriched(catalog))
    return 0


def _cmd_ask(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    gateway = _gateway_from_args(args, cfg)
    record = run_question(args.question, args.db, cfg, gateway)
    _print_answer(record)
    if cfg.trace_dir:
        path = Path(cfg.trace_dir) / "ask_trace.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(record.to_json(include_timings=True), encoding="utf-8")
    return 0


def _cmd_repl(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    gateway = _gateway_from_args(args, cfg)
    print("askdb repl; empty line or EOF exits")
    while True:
        try:
            question = input("? ").strip()
        except EOFError:
            break
        if not question:
            break
        try:
            record = run_question(question, args.db, cfg, gateway)
            _print_answer(record)
        except AskdbError as exc:
            print(f"error: {exc}", file=sys.stderr)
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    gateway = _gateway_from_args(args, cfg)
    cases = load_dataset(args.dataset)
    report = evaluate(cases, cfg, gateway, workers=args.workers, trace_dir=cfg.trace_dir)
    if args.report:
        Path(args.report).write_text(report.to_json(), encoding="utf-8")
    print(report.summary_text())
    mismatches = sum(not r.match for r in report.results)
    if args.strict and mismatches:
        return 2
    return 0


def cli_main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    handlers = {
        "catalog": _cmd_catalog,
        "ask": _cmd_ask,
        "repl": _cmd_repl,
        "eval": _cmd_eval,
    }
    try:
        return handlers[args.command](args)
    except ReplayMiss as exc:
        print(f"replay miss: {exc}", file=sys.stderr)
        return 1
    except AskdbError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
