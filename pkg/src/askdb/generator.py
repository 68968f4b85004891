"""Zero-shot SQL generation: prompt assembly and SQL extraction from replies."""

from __future__ import annotations

import re
from dataclasses import dataclass

from .catalog import DatabaseCatalog, render_enriched
from .errors import NoSqlFound
from .linker import SchemaLinks
from .prompts import load_template


@dataclass(frozen=True)
class GenerationPrompt:
    instruction: str
    schema_block: str
    question: str
    text: str

    def __post_init__(self):
        if not (self.instruction and self.schema_block and self.question):
            raise ValueError("generation prompt parts must all be non-empty")


@dataclass(frozen=True)
class SqlCandidate:
    sql_text: str
    attempt_index: int
    origin: str  # "initial" or "boosted"


def build_generation_prompt(
    question: str,
    catalog: DatabaseCatalog,
    links: SchemaLinks | None = None,
    *,
    prompt_dir: str | None = None,
) -> GenerationPrompt:
    """Assemble instruction, enriched schema, and question, in that order.

    Empty links mean the all-tables fallback: the whole catalog is enriched.
    """
    if links is not None and not links:
        links = None
    schema_block = render_enriched(catalog, links)
    template = load_template("sql_generation", prompt_dir)
    instruction = template.partition("{schema_block}")[0].strip()
    text = template.format(schema_block=schema_block, question=question)
    return GenerationPrompt(
        instruction=instruction, schema_block=schema_block, question=question, text=text
    )


def generate_sql(prompt: GenerationPrompt, llm) -> SqlCandidate:
    """One completion, reply reduced to a single clean SQL statement."""
    reply = llm.ask(prompt.text).text
    return SqlCandidate(sql_text=extract_sql(reply), attempt_index=0, origin="initial")


_FENCE = re.compile(r"```[ \t]*\w*[ \t]*\n?(.*?)```", re.DOTALL)
_SQL_KEYWORD = re.compile(r"\b(SELECT|WITH)\b", re.IGNORECASE)


def _first_statement(text: str) -> str:
    """Cut at the first top-level semicolon (quote-aware)."""
    quote: str | None = None
    for i, char in enumerate(text):
        if quote is not None:
            if char == quote:
                quote = None
        elif char in "'\"":
            quote = char
        elif char == ";":
            return text[:i]
    return text


def extract_sql(reply: str) -> str:
    """Pull one SQL statement out of a model reply.

    The first fenced code block wins; otherwise the first substring starting
    at a top-level SELECT/WITH keyword. The statement terminator and any
    trailing statements are dropped.
    """
    fence = _FENCE.search(reply)
    if fence:
        body = _first_statement(fence.group(1).strip()).strip()
        if body:
            return body
    match = _SQL_KEYWORD.search(reply)
    if match:
        body = _first_statement(reply[match.start() :].strip()).strip()
        if body:
            return body
    raise NoSqlFound(f"no SQL statement in reply: {reply[:200]!r}")
