"""Read-only SQL execution: the environment the repair loop learns from.

Execution failure is data (an outcome with ``status="fail"`` and the engine's
message verbatim), not an exception; only the guard raises, and it raises
before anything touches the database.
"""

from __future__ import annotations

import re
import sqlite3
import time
from dataclasses import dataclass
from pathlib import Path

from .errors import ForbiddenStatement, InvalidOnFailure

DEFAULT_TIMEOUT = 10.0
DEFAULT_ROW_CAP = 10_000

# Verbs that must never appear at paren depth zero, even behind a WITH.
_FORBIDDEN_TOPLEVEL = {
    "insert",
    "update",
    "delete",
    "replace",
    "create",
    "drop",
    "alter",
    "truncate",
    "pragma",
    "attach",
    "detach",
    "vacuum",
    "reindex",
    "analyze",
    "begin",
    "commit",
    "rollback",
}

_LINE_COMMENT = re.compile(r"--[^\n]*")
_BLOCK_COMMENT = re.compile(r"/\*.*?\*/", re.DOTALL)


def _strip_comments(sql: str) -> str:
    return _LINE_COMMENT.sub(" ", _BLOCK_COMMENT.sub(" ", sql))


def _scan_toplevel(sql: str):
    """Yield (index, char, depth) for characters outside string literals."""
    quote: str | None = None
    depth = 0
    for i, char in enumerate(sql):
        if quote is not None:
            if char == quote:
                quote = None
            continue
        if char in "'\"":
            quote = char
            continue
        if char == "(":
            depth += 1
        elif char == ")":
            depth -= 1
        yield i, char, depth


def guard_statement(sql: str) -> None:
    """Accept a single read-only statement; raise ForbiddenStatement else.

    The first top-level keyword must be SELECT or WITH, no second statement
    may follow the first semicolon, and write/DDL verbs are rejected even at
    depth zero behind a WITH prefix.
    """
    text = _strip_comments(sql).strip()
    if not text:
        raise ForbiddenStatement("empty statement")
    first = re.match(r"[A-Za-z_]+", text)
    keyword = first.group(0).upper() if first else text[:20]
    if keyword not in ("SELECT", "WITH"):
        raise ForbiddenStatement(keyword)

    word: list[str] = []
    word_depth = 0
    for i, char, depth in _scan_toplevel(text):
        if char == ";":
            # Anything but whitespace after a top-level terminator is a
            # second statement.
            if text[i + 1 :].strip():
                raise ForbiddenStatement("multiple statements")
            break
        if char.isalpha() or char == "_":
            if not word:
                word_depth = depth
            word.append(char)
        else:
            if word and word_depth == 0:
                token = "".join(word).lower()
                if token in _FORBIDDEN_TOPLEVEL:
                    raise ForbiddenStatement(token.upper())
            word = []
    if word and word_depth == 0 and "".join(word).lower() in _FORBIDDEN_TOPLEVEL:
        raise ForbiddenStatement("".join(word).upper())


@dataclass(frozen=True)
class ExecutionOutcome:
    status: str  # "success" | "fail"
    error_message: str | None = None
    columns: tuple[str, ...] | None = None
    rows: tuple[tuple, ...] | None = None
    elapsed: float = 0.0
    truncated: bool = False

    @property
    def ok(self) -> bool:
        return self.status == "success"


def execute_readonly(
    sql: str,
    db_path: str | Path,
    timeout: float = DEFAULT_TIMEOUT,
    *,
    row_cap: int = DEFAULT_ROW_CAP,
) -> ExecutionOutcome:
    """Execute one guarded statement against a read-only connection.

    Engine errors and timeouts come back as fail outcomes carrying the
    message; the result set is fully materialized up to ``row_cap`` rows.
    """
    started = time.monotonic()
    deadline = started + timeout
    timed_out = False

    def _watchdog():
        nonlocal timed_out
        if time.monotonic() > deadline:
            timed_out = True
            return 1
        return 0

    try:
        conn = sqlite3.connect(f"file:{Path(db_path)}?mode=ro", uri=True)
    except sqlite3.Error as exc:
        return ExecutionOutcome(
            status="fail", error_message=str(exc), elapsed=time.monotonic() - started
        )
    try:
        conn.set_progress_handler(_watchdog, 2000)
        try:
            cursor = conn.execute(sql)
            rows = cursor.fetchmany(row_cap + 1)
        except sqlite3.Error as exc:
            message = f"execution timed out after {timeout}s" if timed_out else str(exc)
            return ExecutionOutcome(
                status="fail", error_message=message, elapsed=time.monotonic() - started
            )
        truncated = len(rows) > row_cap
        if truncated:
            rows = rows[:row_cap]
        columns = tuple(d[0] for d in cursor.description) if cursor.description else ()
        return ExecutionOutcome(
            status="success",
            columns=columns,
            rows=tuple(tuple(r) for r in rows),
            elapsed=time.monotonic() - started,
            truncated=truncated,
        )
    finally:
        conn.close()


def is_empty(outcome: ExecutionOutcome) -> bool:
    """True when a successful result carries no information.

    Zero rows count as empty, and so does a single all-null row: aggregates
    over an empty set (AVG, SUM, ...) produce exactly that shape.
    """
    if outcome.status != "success":
        raise InvalidOnFailure("is_empty is defined only for successful outcomes")
    rows = outcome.rows or ()
    if len(rows) == 0:
        return True
    return len(rows) == 1 and all(value is None for value in rows[0])


def run_candidate(sql: str, db_path: str | Path, timeout: float = DEFAULT_TIMEOUT) -> ExecutionOutcome:
    """Guard then execute; a guard rejection becomes a fail outcome so the
    repair loop can see it as feedback rather than a crash."""
    try:
        guard_statement(sql)
    except ForbiddenStatement as exc:
        return ExecutionOutcome(status="fail", error_message=str(exc))
    return execute_readonly(sql, db_path, timeout)
