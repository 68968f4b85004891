"""Two-phase explain-squeeze schema linking.

The explain phase sends the compact schema plus four fixed reasoning
instructions and gets free-form text back; the squeeze phase compresses that
text into a bracketed ``[table.column, ...]`` list, which is then parsed
leniently and validated against the catalog so hallucinated names never
survive.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass

from .catalog import DatabaseCatalog
from .errors import NoListFound, PreconditionViolated
from .prompts import load_template

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExplainResponse:
    text: str


@dataclass(frozen=True)
class SchemaLinks:
    links: tuple[tuple[str, str], ...]

    @property
    def tables(self) -> tuple[str, ...]:
        ordered: list[str] = []
        seen: set[str] = set()
        for table, _ in self.links:
            key = table.lower()
            if key not in seen:
                seen.add(key)
                ordered.append(table)
        return tuple(ordered)

    def __bool__(self) -> bool:
        return bool(self.links)


def format_links(links: SchemaLinks) -> str:
    """Render links in the squeeze output format."""
    return "[" + ", ".join(f"{t}.{c}" for t, c in links.links) + "]"


def explain(question: str, compact_schema: str, llm) -> ExplainResponse:
    """Run the explain phase over the compact schema."""
    if not question.strip():
        raise PreconditionViolated("explain needs a non-empty question")
    if not compact_schema.strip():
        raise PreconditionViolated("explain needs a non-empty compact schema")
    prompt = build_explain_prompt(question, compact_schema)
    return ExplainResponse(text=llm.ask(prompt).text)


def build_explain_prompt(question: str, compact_schema: str) -> str:
    return load_template("link_explain").format(
        question=question, compact_schema=compact_schema
    )


def squeeze(explain_text: str, llm) -> str:
    """Compress an explanation into the bracketed table.column list."""
    if not explain_text.strip():
        raise PreconditionViolated("squeeze needs a non-empty explanation")
    prompt = load_template("link_squeeze").format(explanation=explain_text)
    return llm.ask(prompt).text


_ENTRY_STRIP = " \t\r\n'\"`"


def _parse_segment(segment: str) -> tuple[list[tuple[str, str]], int]:
    """Parse one bracketed segment body; returns (links, skipped_count)."""
    links: list[tuple[str, str]] = []
    skipped = 0
    seen: set[tuple[str, str]] = set()
    for raw in segment.split(","):
        entry = raw.strip(_ENTRY_STRIP)
        if not entry:
            continue
        parts = entry.split(".")
        if len(parts) != 2 or not parts[0].strip() or not parts[1].strip():
            logger.warning("skipping malformed link entry: %r", entry)
            skipped += 1
            continue
        pair = (parts[0].strip(_ENTRY_STRIP), parts[1].strip(_ENTRY_STRIP))
        if pair in seen:
            continue
        seen.add(pair)
        links.append(pair)
    return links, skipped


def parse_links(squeezed: str, *, strict: bool = False) -> SchemaLinks:
    """Extract the first bracketed list of table.column pairs.

    Lenient mode scans bracketed segments in order and uses the first one
    yielding any valid pair (falling back to the first segment at all, so a
    bare ``[]`` parses as zero links). Strict mode requires the whole text to
    be exactly one well-formed bracketed list.
    """
    if strict:
        body = squeezed.strip()
        if not (body.startswith("[") and body.endswith("]")):
            raise NoListFound("strict mode: text is not a single bracketed list")
        links, skipped = _parse_segment(body[1:-1])
        if skipped:
            raise NoListFound("strict mode: list contains malformed entries")
        return SchemaLinks(links=tuple(links))

    segments = re.findall(r"\[([^\[\]]*)\]", squeezed)
    if not segments:
        raise NoListFound(f"no bracketed list in: {squeezed[:200]!r}")
    first_result: SchemaLinks | None = None
    for segment in segments:
        links, _ = _parse_segment(segment)
        if first_result is None:
            first_result = SchemaLinks(links=tuple(links))
        if links:
            return SchemaLinks(links=tuple(links))
    return first_result


def validate_links(links: SchemaLinks, catalog: DatabaseCatalog) -> SchemaLinks:
    """Drop pairs that do not resolve in the catalog; canonicalize casing.

    Unresolvable pairs are warnings, not errors: an empty result is valid and
    the pipeline then falls back to enriching all tables.
    """
    kept: list[tuple[str, str]] = []
    seen: set[tuple[str, str]] = set()
    for table, column in links.links:
        tbl = catalog.table(table)
        if tbl is None:
            logger.warning("dropping link to unknown table: %s.%s", table, column)
            continue
        col = tbl.column(column)
        if col is None:
            logger.warning("dropping link to unknown column: %s.%s", table, column)
            continue
        pair = (tbl.name, col.name)
        if pair in seen:
            continue
        seen.add(pair)
        kept.append(pair)
    return SchemaLinks(links=tuple(kept))


def link_schema(question: str, catalog: DatabaseCatalog, compact_schema: str, llm) -> SchemaLinks:
    """Full explain → squeeze → parse → validate chain.

    A squeeze output with no recognizable list degrades to zero links (the
    all-tables fallback) instead of failing the question.
    """
    explanation = explain(question, compact_schema, llm)
    squeezed = squeeze(explanation.text, llm)
    try:
        parsed = parse_links(squeezed)
    except NoListFound:
        logger.warning("squeeze output had no bracketed list; falling back to all tables")
        return SchemaLinks(links=())
    return validate_links(parsed, catalog)
