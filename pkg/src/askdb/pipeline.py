"""End-to-end orchestration: rewrite → link → generate → boost, with stage
switches, three backends, and per-question answer records.

Answer records serialize deterministically (wall-clock timings are kept out
of the canonical form) so a replay run reproduces them byte for byte.
"""

from __future__ import annotations

import json
import logging
import tempfile
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from time import monotonic

from .booster import BoostTrace, boost
from .catalog import build_catalog, load_annotations, render_compact
from .errors import AskdbError, ConfigError, ReplayMiss
from .executor import ExecutionOutcome, run_candidate
from .functions import FunctionCall, compile_call, select_and_fill, validate_call
from .gateway import UsageTracker
from .generator import SqlCandidate, build_generation_prompt, generate_sql
from .linker import SchemaLinks, link_schema
from .pybridge import ScriptBoostTrace, boost_script, build_script_prompt, export_tables_csv, extract_code
from .rewriter import TIMESTAMP_FORMAT, RewriteContext, RewriteResult, rewrite

logger = logging.getLogger(__name__)

BACKENDS = ("sql", "function", "script")


@dataclass
class StageSwitches:
    rewrite: bool = True
    link: bool = True
    boost: bool = True


@dataclass
class PipelineConfig:
    backend: str = "sql"
    stages: StageSwitches = field(default_factory=StageSwitches)
    max_boost_attempts: int = 3
    model_id: str | None = None
    temperature: float = 0.0
    prompt_dir: str | None = None
    trace_dir: str | None = None
    annotations_path: str | None = None
    glossary_path: str | None = None
    current_timestamp: str | None = None  # "YYYY-MM-DD HH:MM"; None means wall clock
    location: str | None = None
    interpreter_path: str | None = None
    script_workdir: str | None = None
    script_timeout: float = 30.0
    execution_timeout: float = 10.0
    sample_count: int = 1

    def validate(self) -> None:
        if self.backend not in BACKENDS:
            raise ConfigError(f"unknown backend: {self.backend}")
        if self.max_boost_attempts < 1:
            raise ConfigError("max_boost_attempts must be >= 1")
        if self.backend == "script" and not self.interpreter_path:
            raise ConfigError("script backend needs interpreter_path")

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        stages = StageSwitches(**data.pop("stages", {}))
        known = {f for f in cls.__dataclass_fields__ if f != "stages"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(stages=stages, **data)

    def rewrite_context(self) -> RewriteContext:
        if self.current_timestamp:
            instant = datetime.strptime(self.current_timestamp, TIMESTAMP_FORMAT)
        else:
            instant = datetime.now()
        glossary = {}
        if self.glossary_path:
            glossary = json.loads(Path(self.glossary_path).read_text(encoding="utf-8"))
        return RewriteContext(current_timestamp=instant, location=self.location, glossary=glossary)


@dataclass
class AnswerRecord:
    question: str
    backend: str
    rewrite_result: RewriteResult | None
    rewrite_enabled: bool
    links: SchemaLinks | None
    link_enabled: bool
    link_fallback_all_tables: bool
    function_call: FunctionCall | None
    boost_trace: BoostTrace | None
    script_trace: ScriptBoostTrace | None
    final_text: str | None
    final_outcome: ExecutionOutcome | None
    failure_reason: str | None
    token_usage: dict
    timings: dict

    def to_dict(self, include_timings: bool = False) -> dict:
        # Stage keys stay in pipeline order so serialized records read the
        # same way the stages ran.
        rewrite_section = {"enabled": self.rewrite_enabled}
        if self.rewrite_result is not None:
            rewrite_section.update(
                original=self.rewrite_result.original,
                terms=[
                    {"surface": t.surface, "category": t.category}
                    for t in self.rewrite_result.terms
                ],
                mapping=self.rewrite_result.mapping,
                rewritten=self.rewrite_result.rewritten,
            )
        link_section = {
            "enabled": self.link_enabled,
            "fallback_all_tables": self.link_fallback_all_tables,
            "links": [f"{t}.{c}" for t, c in self.links.links] if self.links else [],
        }
        generate_section: dict = {"backend": self.backend}
        if self.function_call is not None:
            generate_section["function_call"] = {
                "template": self.function_call.template,
                "args": self.function_call.args,
            }
        boost_section: dict = {}
        if self.boost_trace is not None:
            boost_section = {
                "termination": self.boost_trace.termination,
                "error_note": self.boost_trace.error_note,
                "attempts": [
                    {
                        "sql": cand.sql_text,
                        "attempt_index": cand.attempt_index,
                        "origin": cand.origin,
                        "status": outcome.status,
                        "error_message": outcome.error_message,
                        "row_count": len(outcome.rows) if outcome.rows is not None else None,
                    }
                    for cand, outcome in self.boost_trace.attempts
                ],
            }
        elif self.script_trace is not None:
            boost_section = {
                "termination": self.script_trace.termination,
                "error_note": self.script_trace.error_note,
                "attempts": [
                    {
                        "code": code,
                        "status": outcome.status,
                        "stderr": outcome.stderr,
                        "row_count": len(outcome.parsed_rows)
                        if outcome.parsed_rows is not None
                        else None,
                    }
                    for code, outcome in self.script_trace.attempts
                ],
            }
        final_section: dict = {
            "text": self.final_text,
            "failure_reason": self.failure_reason,
        }
        if self.final_outcome is not None and self.final_outcome.status == "success":
            final_section["columns"] = list(self.final_outcome.columns or ())
            final_section["rows"] = [list(r) for r in (self.final_outcome.rows or ())]
        record = {
            "question": self.question,
            "rewrite": rewrite_section,
            "link": link_section,
            "generate": generate_section,
            "boost": boost_section,
            "final": final_section,
            "token_usage": self.token_usage,
        }
        if include_timings:
            record["timings"] = self.timings
        return record

    def to_json(self, include_timings: bool = False) -> str:
        return json.dumps(self.to_dict(include_timings), ensure_ascii=False, indent=2) + "\n"


def run_question(question: str, db_path: str | Path, cfg: PipelineConfig, llm) -> AnswerRecord:
    """Answer one question; stage errors are captured in the record, only
    configuration problems raise."""
    cfg.validate()
    annotations = None
    if cfg.annotations_path:
        annotations = load_annotations(cfg.annotations_path)
    catalog = build_catalog(db_path, annotations, sample_count=cfg.sample_count)
    session = UsageTracker(llm)
    timings: dict[str, float] = {}
    failure_reason: str | None = None

    # Stage 1: rewrite
    started = monotonic()
    rewrite_result: RewriteResult | None = None
    working_question = question
    if cfg.stages.rewrite:
        try:
            rewrite_result = rewrite(question, cfg.rewrite_context(), session)
            working_question = rewrite_result.rewritten
        except ReplayMiss:
            raise  # fixture drift must surface, not degrade
        except AskdbError as exc:
            logger.warning("rewrite stage degraded to identity: %s", exc)
            rewrite_result = RewriteResult(
                original=question, terms=(), mapping={}, rewritten=question
            )
    timings["rewrite"] = monotonic() - started

    # Stage 2: link
    started = monotonic()
    links: SchemaLinks | None = None
    fallback = False
    if cfg.stages.link:
        try:
            links = link_schema(working_question, catalog, render_compact(catalog), session)
            if not links:
                fallback = True
        except ReplayMiss:
            raise
        except AskdbError as exc:
            logger.warning("link stage failed, falling back to all tables: %s", exc)
            links = SchemaLinks(links=())
            fallback = True
    timings["link"] = monotonic() - started

    # Stages 3 + 4: generate then boost, per backend
    started = monotonic()
    function_call = None
    boost_trace = None
    script_trace = None
    final_text = None
    final_outcome = None
    max_attempts = cfg.max_boost_attempts if cfg.stages.boost else 1

    if cfg.backend in ("sql", "function"):
        try:
            if cfg.backend == "sql":
                prompt = build_generation_prompt(
                    working_question, catalog, links, prompt_dir=cfg.prompt_dir
                )
                candidate = generate_sql(prompt, session)
            else:
                function_call = select_and_fill(
                    working_question, catalog, session, prompt_dir=cfg.prompt_dir
                )
                validate_call(function_call, catalog)
                candidate = SqlCandidate(
                    sql_text=compile_call(function_call).sql_text,
                    attempt_index=0,
                    origin="initial",
                )
        except ReplayMiss:
            raise
        except AskdbError as exc:
            failure_reason = f"{type(exc).__name__}: {exc}"
            candidate = None
        timings["generate"] = monotonic() - started

        started = monotonic()
        if candidate is not None:
            boost_trace = boost(
                candidate,
                db_path,
                catalog,
                session,
                max_attempts,
                links=links,
                timeout=cfg.execution_timeout,
                prompt_dir=cfg.prompt_dir,
            )
            final_text = boost_trace.final.sql_text
            final_outcome = boost_trace.final_outcome
            if final_outcome.status == "fail":
                failure_reason = final_outcome.error_message
        timings["boost"] = monotonic() - started
    else:  # script backend
        workdir = Path(cfg.script_workdir) if cfg.script_workdir else Path(tempfile.mkdtemp(prefix="askdb_"))
        workdir.mkdir(parents=True, exist_ok=True)
        exports = export_tables_csv(db_path, links, workdir, catalog)
        code = None
        try:
            prompt = build_script_prompt(
                working_question, exports, catalog, prompt_dir=cfg.prompt_dir
            )
            code = extract_code(session.ask(prompt).text)
        except AskdbError as exc:
            failure_reason = f"{type(exc).__name__}: {exc}"
        timings["generate"] = monotonic() - started

        started = monotonic()
        if code is not None:
            # Repair prompts reuse the renamed-table schema block from the
            # generation prompt.
            renamed_block = prompt.split("Database schema:\n", 1)[1].rsplit("\n\nQuestion:", 1)[0]
            script_trace = boost_script(
                code,
                workdir,
                cfg.interpreter_path,
                renamed_block,
                session,
                max_attempts,
                timeout=cfg.script_timeout,
                prompt_dir=cfg.prompt_dir,
            )
            final_text = script_trace.final
            final_outcome = script_trace.final_outcome.as_execution_outcome()
            if final_outcome.status == "fail":
                failure_reason = final_outcome.error_message
        timings["boost"] = monotonic() - started

    return AnswerRecord(
        question=question,
        backend=cfg.backend,
        rewrite_result=rewrite_result,
        rewrite_enabled=cfg.stages.rewrite,
        links=links,
        link_enabled=cfg.stages.link,
        link_fallback_all_tables=fallback,
        function_call=function_call,
        boost_trace=boost_trace,
        script_trace=script_trace,
        final_text=final_text,
        final_outcome=final_outcome,
        failure_reason=failure_reason,
        token_usage=session.totals(),
        timings=timings,
    )
