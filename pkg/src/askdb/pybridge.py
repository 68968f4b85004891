"""Script backend: export tables to CSV, prompt for a Pandas script instead
of SQL, run it in a subprocess, and capture the printed CSV for comparison.

Prompts reference the CSV files by bare filename and scripts run with the
export directory as their working directory, so recorded transcripts stay
replayable across machines and the harness never hands a script a path
outside its own directory.
"""

from __future__ import annotations

import csv
import io
import logging
import sqlite3
import subprocess
import time
from dataclasses import dataclass, replace
from pathlib import Path

from .catalog import DatabaseCatalog, TableDescriptor, render_enriched
from .errors import GatewayError, InterpreterMissing, MalformedLLMOutput, PreconditionViolated
from .executor import ExecutionOutcome
from .generator import _FENCE
from .linker import SchemaLinks
from .prompts import load_template

logger = logging.getLogger(__name__)

DEFAULT_SCRIPT_TIMEOUT = 30.0
SCRIPT_FILENAME = "answer_script.py"


@dataclass(frozen=True)
class TableExport:
    table: str
    path: Path
    row_count: int


@dataclass(frozen=True)
class ScriptOutcome:
    status: str  # "success" | "fail"
    stdout: str
    stderr: str
    parsed_columns: tuple[str, ...] | None = None
    parsed_rows: tuple[tuple, ...] | None = None
    elapsed: float = 0.0

    def as_execution_outcome(self) -> ExecutionOutcome:
        """Adapter so script results flow through the same emptiness check
        and result comparator as SQL results. Empty CSV cells become nulls."""
        if self.status != "success":
            return ExecutionOutcome(status="fail", error_message=self.stderr or "script failed",
                                    elapsed=self.elapsed)
        return ExecutionOutcome(
            status="success",
            columns=self.parsed_columns or (),
            rows=self.parsed_rows or (),
            elapsed=self.elapsed,
        )


def export_tables_csv(
    db_path: str | Path,
    links: SchemaLinks | None,
    directory: str | Path,
    catalog: DatabaseCatalog | None = None,
) -> list[TableExport]:
    """Write one CSV per linked table (all tables when links are empty).

    RFC-4180 quoting, header row of column names in catalog order, rows in
    natural order; re-exporting an unchanged database is byte-identical.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if catalog is None:
        from .catalog import build_catalog

        catalog = build_catalog(db_path)
    wanted = None
    if links is not None and links:
        wanted = {t.lower() for t in links.tables}

    exports: list[TableExport] = []
    conn = sqlite3.connect(f"file:{Path(db_path)}?mode=ro", uri=True)
    try:
        for table in catalog.tables:
            if wanted is not None and table.name.lower() not in wanted:
                continue
            target = directory / f"{table.name}.csv"
            quoted_cols = ", ".join('"' + c.name.replace('"', '""') + '"' for c in table.columns)
            quoted_table = '"' + table.name.replace('"', '""') + '"'
            with open(target, "w", encoding="utf-8", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow([c.name for c in table.columns])
                count = 0
                for row in conn.execute(f"SELECT {quoted_cols} FROM {quoted_table}"):
                    writer.writerow(row)
                    count += 1
            exports.append(TableExport(table=table.name, path=target, row_count=count))
    finally:
        conn.close()
    return exports


def build_script_prompt(
    question: str,
    exports: list[TableExport],
    catalog: DatabaseCatalog,
    *,
    prompt_dir: str | None = None,
) -> str:
    """The SQL generation prompt with the instruction swapped to the Pandas
    wording, CSV file names substituted for table names, and a print-CSV
    output contract."""
    if not exports:
        raise PreconditionViolated("script prompt needs at least one exported table")
    renamed: list[TableDescriptor] = []
    by_name = {e.table.lower(): e for e in exports}
    for table in catalog.tables:
        export = by_name.get(table.name.lower())
        if export is not None:
            renamed.append(replace(table, name=export.path.name))
    schema_block = render_enriched(replace(catalog, tables=tuple(renamed)))
    return load_template("python_generation", prompt_dir).format(
        schema_block=schema_block, question=question
    )


def extract_code(reply: str) -> str:
    """First fenced block body, else the whole reply; empty replies error."""
    fence = _FENCE.search(reply)
    code = fence.group(1).strip() if fence else reply.strip()
    if not code:
        raise MalformedLLMOutput("reply contains no script code")
    return code


def execute_script(
    code: str,
    workdir: str | Path,
    interpreter: str | Path,
    timeout: float = DEFAULT_SCRIPT_TIMEOUT,
) -> ScriptOutcome:
    """Run the script in a subprocess with ``workdir`` as its directory.

    A nonzero exit or a timeout is a fail outcome with stderr attached; on
    success stdout is parsed as CSV (first row the header) into rows, with
    empty cells canonicalized to null.
    """
    interpreter = Path(interpreter)
    if not interpreter.is_file():
        raise InterpreterMissing(f"script interpreter not found: {interpreter}")
    workdir = Path(workdir)
    script_path = workdir / SCRIPT_FILENAME
    script_path.write_text(code, encoding="utf-8")
    started = time.monotonic()
    try:
        proc = subprocess.run(
            [str(interpreter), SCRIPT_FILENAME],
            cwd=workdir,
            capture_output=True,
            text=True,
            timeout=timeout,
        )
    except subprocess.TimeoutExpired as exc:
        stderr = exc.stderr if isinstance(exc.stderr, str) else ""
        return ScriptOutcome(
            status="fail",
            stdout="",
            stderr=stderr or f"script timed out after {timeout}s",
            elapsed=time.monotonic() - started,
        )
    elapsed = time.monotonic() - started
    if proc.returncode != 0:
        return ScriptOutcome(
            status="fail",
            stdout=proc.stdout,
            stderr=proc.stderr or f"script exited with code {proc.returncode}",
            elapsed=elapsed,
        )
    columns, rows = _parse_csv_stdout(proc.stdout)
    return ScriptOutcome(
        status="success",
        stdout=proc.stdout,
        stderr=proc.stderr,
        parsed_columns=columns,
        parsed_rows=rows,
        elapsed=elapsed,
    )


def _parse_csv_stdout(stdout: str) -> tuple[tuple[str, ...], tuple[tuple, ...]]:
    if not stdout.strip():
        return (), ()
    reader = csv.reader(io.StringIO(stdout))
    parsed = [row for row in reader if row]
    if not parsed:
        return (), ()
    header = tuple(parsed[0])
    rows = tuple(tuple(None if cell == "" else cell for cell in row) for row in parsed[1:])
    return header, rows


@dataclass(frozen=True)
class ScriptBoostTrace:
    attempts: tuple[tuple[str, ScriptOutcome], ...]
    termination: str
    final: str
    error_note: str | None = None

    @property
    def final_outcome(self) -> ScriptOutcome:
        return self.attempts[-1][1]


def boost_script(
    initial_code: str,
    workdir: str | Path,
    interpreter: str | Path,
    schema_block: str,
    llm,
    max_attempts: int = 3,
    *,
    timeout: float = DEFAULT_SCRIPT_TIMEOUT,
    prompt_dir: str | None = None,
) -> ScriptBoostTrace:
    """Same repair loop as the SQL backend with stderr as the error message."""
    from .booster import EMPTY_RESULT_NOTICE, TERMINATION_EXHAUSTED, TERMINATION_SUCCESS
    from .executor import is_empty

    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    attempts: list[tuple[str, ScriptOutcome]] = []
    code = initial_code
    termination = TERMINATION_EXHAUSTED
    error_note = None
    for round_index in range(max_attempts):
        outcome = execute_script(code, workdir, interpreter, timeout)
        attempts.append((code, outcome))
        view = outcome.as_execution_outcome()
        if view.status == "success" and not is_empty(view):
            termination = TERMINATION_SUCCESS
            break
        if round_index == max_attempts - 1:
            break
        if view.status == "fail":
            feedback = f"Error message: {view.error_message}"
        else:
            feedback = EMPTY_RESULT_NOTICE
        prompt = load_template("script_repair", prompt_dir).format(
            previous_code=code,
            status=view.status,
            error_message_or_empty_notice=feedback,
            schema_block=schema_block,
        )
        try:
            code = extract_code(llm.ask(prompt).text)
        except (GatewayError, MalformedLLMOutput) as exc:
            error_note = f"repair round {round_index + 1} aborted: {exc}"
            logger.warning("%s", error_note)
            break
    return ScriptBoostTrace(
        attempts=tuple(attempts),
        termination=termination,
        final=attempts[-1][0],
        error_note=error_note,
    )
