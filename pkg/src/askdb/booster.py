"""Bounded repair loop driven by execution feedback.

Each candidate runs against the database; success with a non-empty result
ends the loop immediately, anything else (engine error, guard rejection, or
an empty result) re-prompts the model with the previous SQL, the status
label, the feedback message, and the enriched schema, up to a fixed budget
of executed candidates. The budget counts the initial candidate; the default
of 3 total tries tolerates the case where an empty result is truly positive.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

from .catalog import DatabaseCatalog, render_enriched
from .errors import GatewayError, NoSqlFound, PreconditionViolated
from .executor import DEFAULT_TIMEOUT, ExecutionOutcome, is_empty, run_candidate
from .generator import SqlCandidate, extract_sql
from .linker import SchemaLinks
from .prompts import load_template

logger = logging.getLogger(__name__)

DEFAULT_MAX_ATTEMPTS = 3
EMPTY_RESULT_NOTICE = "The query executed successfully but returned an empty result."

TERMINATION_SUCCESS = "success_nonempty"
TERMINATION_EXHAUSTED = "max_attempts_exhausted"


@dataclass(frozen=True)
class BoostTrace:
    attempts: tuple[tuple[SqlCandidate, ExecutionOutcome], ...]
    termination: str
    final: SqlCandidate
    error_note: str | None = None

    @property
    def final_outcome(self) -> ExecutionOutcome:
        return self.attempts[-1][1]


def build_repair_prompt(
    previous: SqlCandidate,
    outcome: ExecutionOutcome,
    schema_block: str,
    *,
    prompt_dir: str | None = None,
) -> str:
    """Feedback prompt for one repair round.

    Defined only for outcomes that need repairing: failures carry the engine
    message verbatim, successful-but-empty outcomes carry the empty notice.
    """
    if outcome.status == "fail":
        feedback = f"Error message: {outcome.error_message}"
    elif is_empty(outcome):
        feedback = EMPTY_RESULT_NOTICE
    else:
        raise PreconditionViolated("repair prompt requested for a non-empty success")
    return load_template("sql_repair", prompt_dir).format(
        previous_sql=previous.sql_text,
        status=outcome.status,
        error_message_or_empty_notice=feedback,
        schema_block=schema_block,
    )


def boost(
    initial: SqlCandidate,
    db_path: str | Path,
    catalog: DatabaseCatalog,
    llm,
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
    *,
    links: SchemaLinks | None = None,
    timeout: float = DEFAULT_TIMEOUT,
    prompt_dir: str | None = None,
) -> BoostTrace:
    """Run the repair loop; always returns the full trace and last candidate.

    A gateway failure or an unreadable repair reply ends the loop with the
    attempts made so far and an error note; it never raises mid-loop.
    """
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    if links is not None and not links:
        links = None
    schema_block = render_enriched(catalog, links)

    attempts: list[tuple[SqlCandidate, ExecutionOutcome]] = []
    candidate = initial
    termination = TERMINATION_EXHAUSTED
    error_note = None
    for round_index in range(max_attempts):
        outcome = run_candidate(candidate.sql_text, db_path, timeout)
        attempts.append((candidate, outcome))
        if outcome.status == "success" and not is_empty(outcome):
            termination = TERMINATION_SUCCESS
            break
        if round_index == max_attempts - 1:
            break
        prompt = build_repair_prompt(candidate, outcome, schema_block, prompt_dir=prompt_dir)
        try:
            reply = llm.ask(prompt).text
            next_sql = extract_sql(reply)
        except (GatewayError, NoSqlFound) as exc:
            error_note = f"repair round {round_index + 1} aborted: {exc}"
            logger.warning("%s", error_note)
            break
        candidate = SqlCandidate(
            sql_text=next_sql, attempt_index=candidate.attempt_index + 1, origin="boosted"
        )
    return BoostTrace(
        attempts=tuple(attempts),
        termination=termination,
        final=attempts[-1][0],
        error_note=error_note,
    )
