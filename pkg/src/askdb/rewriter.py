"""Query rewriting: extract vague terms, transform them into explicit values,
and substitute them back into the question.

Extraction asks the model for vague temporal/spatial/domain terms and keeps
only those that occur verbatim in the question. Transformation resolves
glossary terms and the built-in temporal surfaces ("now", "just now")
deterministically from the injected clock; anything else goes to the model.
Replacement is mechanical by default so it cannot hallucinate; an LLM replace
mode is available for parity with prompt-only setups.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from datetime import datetime, timedelta

from .errors import KeyAbsent, MalformedLLMOutput
from .prompts import load_template

logger = logging.getLogger(__name__)

CATEGORIES = ("temporal", "spatial", "domain")
TIMESTAMP_FORMAT = "%Y-%m-%d %H:%M"
DEFAULT_RECENT_WINDOW = timedelta(minutes=15)


@dataclass(frozen=True)
class RewriteContext:
    current_timestamp: datetime
    location: str | None = None
    glossary: dict[str, str] = field(default_factory=dict)
    recent_window: timedelta = DEFAULT_RECENT_WINDOW


@dataclass(frozen=True)
class VagueTerm:
    surface: str
    category: str


@dataclass(frozen=True)
class RewriteResult:
    original: str
    terms: tuple[VagueTerm, ...]
    mapping: dict[str, str]
    rewritten: str

    @property
    def is_identity(self) -> bool:
        return self.rewritten == self.original and not self.terms


def render_timestamp(ctx: RewriteContext) -> str:
    return ctx.current_timestamp.strftime(TIMESTAMP_FORMAT)


def _format_glossary(glossary: dict[str, str]) -> str:
    if not glossary:
        return "(none)"
    return "; ".join(f"{term} = {definition}" for term, definition in sorted(glossary.items()))


def _find_json_fragment(text: str, opener: str, closer: str) -> str | None:
    start = text.find(opener)
    while start != -1:
        depth = 0
        for i in range(start, len(text)):
            char = text[i]
            if char == opener:
                depth += 1
            elif char == closer:
                depth -= 1
                if depth == 0:
                    return text[start : i + 1]
        start = text.find(opener, start + 1)
    return None


def _parse_term_array(reply: str) -> list[dict]:
    fragment = _find_json_fragment(reply, "[", "]")
    if fragment is None:
        raise MalformedLLMOutput("no JSON array in extraction reply")
    try:
        data = json.loads(fragment)
    except json.JSONDecodeError as exc:
        raise MalformedLLMOutput(f"extraction reply is not valid JSON: {exc}") from exc
    if not isinstance(data, list):
        raise MalformedLLMOutput("extraction reply is not a JSON array")
    return data


def extract_vague_terms(question: str, ctx: RewriteContext, llm) -> list[VagueTerm]:
    """Ask the model for vague terms, keeping only verbatim substrings."""
    if not question:
        raise ValueError("question must be non-empty")
    prompt = load_template("rewrite_extract").format(
        question=question,
        timestamp=render_timestamp(ctx),
        location=ctx.location or "(unknown)",
        glossary=_format_glossary(ctx.glossary),
    )
    reply = llm.ask(prompt).text
    try:
        raw_terms = _parse_term_array(reply)
    except MalformedLLMOutput as exc:
        logger.warning("unparseable extraction output treated as zero terms: %s", exc)
        return []

    terms: list[VagueTerm] = []
    seen: set[str] = set()
    for entry in raw_terms:
        if isinstance(entry, str):
            surface, category = entry, "domain"
        elif isinstance(entry, dict) and "term" in entry:
            surface = str(entry["term"])
            category = str(entry.get("category", "domain")).lower()
        else:
            logger.warning("skipping malformed term entry: %r", entry)
            continue
        if category not in CATEGORIES:
            category = "domain"
        if surface not in question:
            logger.warning("dropping term not present verbatim in question: %r", surface)
            continue
        if surface in seen:
            continue
        seen.add(surface)
        terms.append(VagueTerm(surface=surface, category=category))
    return terms


def _builtin_temporal(term: VagueTerm, ctx: RewriteContext) -> str | None:
    if term.category != "temporal":
        return None
    surface = term.surface.lower()
    if surface == "now":
        return render_timestamp(ctx)
    if surface == "just now":
        start = ctx.current_timestamp - ctx.recent_window
        return f"between {start.strftime(TIMESTAMP_FORMAT)} and {render_timestamp(ctx)}"
    return None


def transform_terms(terms: list[VagueTerm], ctx: RewriteContext, llm) -> dict[str, str]:
    """Produce an explicit replacement for every term.

    Glossary matches and the built-in temporal surfaces never touch the
    model; the rest are transformed in a single completion. Terms the model
    omits fall back to their own surface so the mapping stays total.
    """
    mapping: dict[str, str] = {}
    glossary_lowered = {k.lower(): v for k, v in ctx.glossary.items()}
    pending: list[VagueTerm] = []
    for term in terms:
        hit = glossary_lowered.get(term.surface.lower())
        if hit is not None:
            mapping[term.surface] = hit
            continue
        builtin = _builtin_temporal(term, ctx)
        if builtin is not None:
            mapping[term.surface] = builtin
            continue
        pending.append(term)

    if pending:
        prompt = load_template("rewrite_transform").format(
            timestamp=render_timestamp(ctx),
            location=ctx.location or "(unknown)",
            glossary=_format_glossary(ctx.glossary),
            terms=json.dumps([t.surface for t in pending], ensure_ascii=False),
        )
        reply = llm.ask(prompt).text
        fragment = _find_json_fragment(reply, "{", "}")
        replacements: dict = {}
        if fragment is not None:
            try:
                parsed = json.loads(fragment)
                if isinstance(parsed, dict):
                    replacements = parsed
            except json.JSONDecodeError:
                pass
        for term in pending:
            value = replacements.get(term.surface)
            if isinstance(value, str) and value:
                mapping[term.surface] = value
            else:
                logger.warning("no transform for %r; keeping surface unchanged", term.surface)
                mapping[term.surface] = term.surface
    return mapping


def replace_terms(question: str, mapping: dict[str, str]) -> str:
    """Deterministic local substitution, longest key first, single pass."""
    if not mapping:
        return question
    for key in mapping:
        if key not in question:
            raise KeyAbsent(f"replacement key not found in question: {key!r}")
    pattern = "|".join(re.escape(k) for k in sorted(mapping, key=len, reverse=True))
    return re.sub(pattern, lambda m: mapping[m.group(0)], question)


def rewrite(question: str, ctx: RewriteContext, llm, *, llm_replace: bool = False) -> RewriteResult:
    """Run extract, transform, replace; identity when nothing is vague."""
    terms = extract_vague_terms(question, ctx, llm)
    if not terms:
        return RewriteResult(original=question, terms=(), mapping={}, rewritten=question)
    mapping = transform_terms(terms, ctx, llm)
    if llm_replace:
        prompt = load_template("rewrite_replace").format(
            question=question,
            mapping=json.dumps(mapping, ensure_ascii=False, sort_keys=True),
        )
        rewritten = llm.ask(prompt).text.strip()
    else:
        rewritten = replace_terms(question, mapping)
    return RewriteResult(
        original=question, terms=tuple(terms), mapping=mapping, rewritten=rewritten
    )
