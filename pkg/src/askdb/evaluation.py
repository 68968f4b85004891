"""Execution-accuracy harness: difficulty tiers, result comparison, and the
dataset runner.

Accuracy is execution accuracy: a prediction counts iff executing it yields
the same result set as executing the gold SQL. Comparison uses bag semantics
(row order matters only when the gold query has a top-level ORDER BY),
ignores column names, unifies numeric strings with numbers, and compares
reals within 1e-6 relative tolerance; these conventions are pinned by a
brute-force oracle in the test suite.
"""

from __future__ import annotations

import json
import logging
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .errors import UnparseableSql
from .executor import ExecutionOutcome, execute_readonly, guard_statement

logger = logging.getLogger(__name__)

EASY = "easy"
MEDIUM = "medium"
HARD = "hard"
TIERS = (EASY, MEDIUM, HARD)

_AGGREGATE = re.compile(r"\b(sum|avg|count|min|max)\s*\(", re.IGNORECASE)
_STRING_LITERAL = re.compile(r"'(?:[^']|'')*'")
_CLAUSE_KEYWORDS = {
    "where", "group", "order", "limit", "having", "union", "intersect", "except",
    "on", "join", "inner", "left", "right", "outer", "cross", "natural", "using",
    "as", "select", "from", "set", "values", "offset", "and", "or", "not",
}


def _strip_strings(sql: str) -> str:
    stripped = _STRING_LITERAL.sub("''", sql)
    if "'" in stripped.replace("''", ""):
        raise UnparseableSql("unbalanced string literal")
    return stripped


def _referenced_tables(sql: str) -> set[str]:
    """Distinct table names after FROM/JOIN, including inside subqueries,
    with comma-separated FROM lists followed and CTE names excluded."""
    names: list[str] = []
    for match in re.finditer(r"\b(from|join)\b", sql, re.IGNORECASE):
        pos = match.end()
        while True:
            ident = re.match(r"\s*([A-Za-z_]\w*)", sql[pos:])
            if not ident:
                break  # e.g. FROM ( subquery — the inner FROM is scanned on its own
            names.append(ident.group(1).lower())
            pos += ident.end()
            alias = re.match(r"\s+(?:as\s+)?([A-Za-z_]\w*)", sql[pos:], re.IGNORECASE)
            if alias and alias.group(1).lower() not in _CLAUSE_KEYWORDS:
                pos += alias.end()
            comma = re.match(r"\s*,", sql[pos:])
            if not comma:
                break
            pos += comma.end()
    ctes = {
        m.group(1).lower()
        for m in re.finditer(r"\b([A-Za-z_]\w*)\s+as\s*\(", sql, re.IGNORECASE)
    }
    return set(names) - ctes


def classify_difficulty(sql: str) -> str:
    """Tier a query: hard when it touches more than one table, else medium
    when it aggregates, else easy."""
    stripped = _strip_strings(sql)
    if not re.search(r"\bselect\b", stripped, re.IGNORECASE):
        raise UnparseableSql("no SELECT keyword found")
    if len(_referenced_tables(stripped)) > 1:
        return HARD
    if _AGGREGATE.search(stripped):
        return MEDIUM
    return EASY


# --- result comparison -------------------------------------------------

_NUMERIC_STRING = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")

REL_TOLERANCE = 1e-6
ABS_TOLERANCE = 1e-9


def _canonical_cell(value):
    if value is None:
        return None
    if isinstance(value, bool):
        return float(value)
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        if _NUMERIC_STRING.match(value.strip()):
            return float(value.strip())
        return value
    if isinstance(value, bytes):
        return ("bytes", value)
    return str(value)


def _cells_equal(a, b) -> bool:
    if a is None or b is None:
        return a is None and b is None
    if isinstance(a, float) and isinstance(b, float):
        return math.isclose(a, b, rel_tol=REL_TOLERANCE, abs_tol=ABS_TOLERANCE)
    return type(a) is type(b) and a == b


def _sort_key(row: tuple) -> tuple:
    key = []
    for cell in row:
        if cell is None:
            key.append((0, ""))
        elif isinstance(cell, float):
            key.append((1, cell))
        elif isinstance(cell, str):
            key.append((2, cell))
        else:
            key.append((3, repr(cell)))
    return tuple(key)


def _has_toplevel_order_by(sql: str) -> bool:
    stripped = _strip_strings(sql)
    depth = 0
    for match in re.finditer(r"[()]|\border\s+by\b", stripped, re.IGNORECASE):
        token = match.group(0)
        if token == "(":
            depth += 1
        elif token == ")":
            depth -= 1
        elif depth == 0:
            return True
    return False


def compare_results(pred: ExecutionOutcome, gold: ExecutionOutcome, gold_sql: str) -> bool:
    """Execution-accuracy match between a predicted and a gold result set.

    A failed prediction never matches. Column names are ignored but column
    counts must agree; rows compare as a multiset unless the gold query
    orders its output at the top level.
    """
    if pred.status != "success" or gold.status != "success":
        return False
    pred_cols = pred.columns or ()
    gold_cols = gold.columns or ()
    if len(pred_cols) != len(gold_cols):
        return False
    pred_rows = [tuple(_canonical_cell(c) for c in row) for row in (pred.rows or ())]
    gold_rows = [tuple(_canonical_cell(c) for c in row) for row in (gold.rows or ())]
    if len(pred_rows) != len(gold_rows):
        return False
    if not _has_toplevel_order_by(gold_sql):
        pred_rows.sort(key=_sort_key)
        gold_rows.sort(key=_sort_key)
    return all(
        len(p) == len(g) and all(_cells_equal(pc, gc) for pc, gc in zip(p, g))
        for p, g in zip(pred_rows, gold_rows)
    )


# --- dataset and report -------------------------------------------------


@dataclass(frozen=True)
class EvalCase:
    id: str
    question: str
    gold_sql: str
    db_ref: Path
    difficulty: str | None = None


@dataclass(frozen=True)
class CaseResult:
    case: EvalCase
    predicted: str | None
    match: bool
    tier: str
    reason: str | None = None
    token_usage: dict | None = None
    trace_ref: str | None = None


@dataclass(frozen=True)
class EvalReport:
    results: tuple[CaseResult, ...]
    ex_overall: float | None
    ex_by_difficulty: dict[str, float | None]
    token_usage: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "cases": [
                {
                    "id": r.case.id,
                    "question": r.case.question,
                    "gold_sql": r.case.gold_sql,
                    "predicted": r.predicted,
                    "match": r.match,
                    "difficulty": r.tier,
                    "reason": r.reason,
                    "trace_ref": r.trace_ref,
                }
                for r in self.results
            ],
            "ex_overall": self.ex_overall,
            "ex_by_difficulty": self.ex_by_difficulty,
            "token_usage": self.token_usage,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=2) + "\n"

    def summary_text(self) -> str:
        lines = [f"{'difficulty':<12}{'cases':>7}{'matched':>9}{'accuracy':>10}"]
        by_tier: dict[str, list[CaseResult]] = {tier: [] for tier in TIERS}
        for result in self.results:
            by_tier.setdefault(result.tier, []).append(result)
        for tier in TIERS:
            group = by_tier.get(tier, [])
            if not group:
                continue
            matched = sum(r.match for r in group)
            lines.append(
                f"{tier:<12}{len(group):>7}{matched:>9}{matched / len(group):>10.4f}"
            )
        total = len(self.results)
        matched = sum(r.match for r in self.results)
        accuracy = f"{matched / total:.4f}" if total else "n/a"
        lines.append(f"{'overall':<12}{total:>7}{matched:>9}{accuracy:>10}")
        return "\n".join(lines)


def load_dataset(path: str | Path) -> list[EvalCase]:
    """Read a JSON Lines dataset of {id, question, gold_sql, db, difficulty?}.

    Relative db paths resolve against the dataset file's directory; gold SQL
    must pass the read-only guard.
    """
    path = Path(path)
    cases: list[EvalCase] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            db_ref = Path(record["db"])
            if not db_ref.is_absolute():
                db_ref = path.parent / db_ref
            guard_statement(record["gold_sql"])
            difficulty = record.get("difficulty")
            if difficulty is not None and difficulty not in TIERS:
                raise ValueError(f"line {line_no}: unknown difficulty {difficulty!r}")
            cases.append(
                EvalCase(
                    id=str(record["id"]),
                    question=record["question"],
                    gold_sql=record["gold_sql"],
                    db_ref=db_ref,
                    difficulty=difficulty,
                )
            )
    return cases


def evaluate(cases, cfg, gateway, *, workers: int = 1, trace_dir: str | Path | None = None) -> EvalReport:
    """Run every case through the configured pipeline and aggregate EX.

    Per-case errors (gateway misses, unusable SQL, execution failures) are
    recorded as mismatches with a reason; the run itself never aborts.
    """
    from .pipeline import run_question  # local import to avoid a cycle

    def run_one(case: EvalCase) -> CaseResult:
        tier = case.difficulty or classify_difficulty(case.gold_sql)
        gold_outcome = execute_readonly(case.gold_sql, case.db_ref, cfg.execution_timeout)
        trace_ref = None
        try:
            record = run_question(case.question, case.db_ref, cfg, gateway)
        except Exception as exc:  # per-case resilience: mismatch, keep going
            logger.warning("case %s errored: %s", case.id, exc)
            return CaseResult(case=case, predicted=None, match=False, tier=tier,
                              reason=f"{type(exc).__name__}: {exc}")
        if trace_dir is not None:
            trace_path = Path(trace_dir) / f"{case.id}.json"
            trace_path.parent.mkdir(parents=True, exist_ok=True)
            trace_path.write_text(record.to_json(include_timings=True), encoding="utf-8")
            trace_ref = str(trace_path)
        final_outcome = record.final_outcome
        match = (
            final_outcome is not None
            and compare_results(final_outcome, gold_outcome, case.gold_sql)
        )
        reason = None
        if not match:
            reason = record.failure_reason or "result mismatch"
        return CaseResult(
            case=case,
            predicted=record.final_text,
            match=match,
            tier=tier,
            reason=reason,
            token_usage=record.token_usage,
            trace_ref=trace_ref,
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_one, cases))
    else:
        results = [run_one(case) for case in cases]
    results.sort(key=lambda r: r.case.id)

    totals = {"calls": 0, "prompt_tokens": 0, "completion_tokens": 0}
    for result in results:
        for key in totals:
            totals[key] += (result.token_usage or {}).get(key, 0)

    ex_overall = (sum(r.match for r in results) / len(results)) if results else None
    ex_by_difficulty: dict[str, float | None] = {}
    for tier in TIERS:
        group = [r for r in results if r.tier == tier]
        ex_by_difficulty[tier] = (sum(r.match for r in group) / len(group)) if group else None
    return EvalReport(
        results=tuple(results),
        ex_overall=ex_overall,
        ex_by_difficulty=ex_by_difficulty,
        token_usage=totals,
    )
