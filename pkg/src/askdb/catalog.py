"""Schema introspection and the two textual schema renderings used in prompts.

A :class:`DatabaseCatalog` is built once per database file and rendered either
compactly (table names plus column lists, for schema linking) or enriched
(per-column value type, meaning, and a sample value, for SQL generation).
Column meanings come from an optional sidecar annotation file because SQLite
has no first-class column comments.
"""

from __future__ import annotations

import json
import logging
import sqlite3
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING

from .errors import AnnotationParseError, UnreadableDatabase, UnresolvedLink

if TYPE_CHECKING:
    from .linker import SchemaLinks

logger = logging.getLogger(__name__)

DEFAULT_SAMPLE_COUNT = 1
DEFAULT_SAMPLE_MAX_CHARS = 64


@dataclass(frozen=True)
class ColumnDescriptor:
    name: str
    value_type: str
    meaning: str
    sample_values: tuple[str, ...]


@dataclass(frozen=True)
class TableDescriptor:
    name: str
    comment: str | None
    columns: tuple[ColumnDescriptor, ...]

    def column(self, name: str) -> ColumnDescriptor | None:
        lowered = name.lower()
        for col in self.columns:
            if col.name.lower() == lowered:
                return col
        return None


@dataclass(frozen=True)
class DatabaseCatalog:
    db_id: str
    tables: tuple[TableDescriptor, ...]
    source_path: str

    def table(self, name: str) -> TableDescriptor | None:
        lowered = name.lower()
        for tbl in self.tables:
            if tbl.name.lower() == lowered:
                return tbl
        return None


def _quote_identifier(name: str) -> str:
    return '"' + name.replace('"', '""') + '"'


def _render_cell(value: object, max_chars: int) -> str:
    if isinstance(value, bytes):
        text = value.hex()
    else:
        text = str(value)
    return text[:max_chars]


def load_annotations(path: str | Path) -> dict[tuple[str, str], str]:
    """Load a JSON annotation file mapping "table.column" to meaning text."""
    raw = Path(path).read_text(encoding="utf-8")
    if not raw.strip():
        return {}
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise AnnotationParseError(exc.msg, line=exc.lineno) from exc
    if not isinstance(data, dict):
        raise AnnotationParseError("top-level value must be a JSON object")
    annotations: dict[tuple[str, str], str] = {}
    for key, meaning in data.items():
        table, dot, column = key.partition(".")
        if not dot or not table or not column:
            raise AnnotationParseError(f"key {key!r} is not of the form table.column")
        if not isinstance(meaning, str):
            raise AnnotationParseError(f"meaning for {key!r} must be a string")
        annotations[(table, column)] = meaning
    return annotations


def build_catalog(
    db_path: str | Path,
    annotations: dict[tuple[str, str], str] | None = None,
    *,
    sample_count: int = DEFAULT_SAMPLE_COUNT,
    sample_max_chars: int = DEFAULT_SAMPLE_MAX_CHARS,
) -> DatabaseCatalog:
    """Introspect a SQLite file into an immutable catalog.

    Meanings resolve from ``annotations`` (case-insensitive on both table and
    column); annotation keys that match nothing are logged as warnings, never
    fatal. Sample values are the first ``sample_count`` non-null cells of each
    column in natural row order, rendered and truncated to
    ``sample_max_chars`` characters.
    """
    path = Path(db_path)
    if not path.is_file():
        raise UnreadableDatabase(f"database file not found: {path}")
    annotations = annotations or {}
    lowered_annotations = {
        (t.lower(), c.lower()): (t, c, meaning) for (t, c), meaning in annotations.items()
    }
    consumed: set[tuple[str, str]] = set()

    try:
        conn = sqlite3.connect(f"file:{path}?mode=ro", uri=True)
    except sqlite3.Error as exc:
        raise UnreadableDatabase(f"cannot open {path}: {exc}") from exc
    try:
        try:
            names = [
                row[0]
                for row in conn.execute(
                    "SELECT name FROM sqlite_master"
                    " WHERE type = 'table' AND name NOT LIKE 'sqlite_%'"
                )
            ]
        except sqlite3.DatabaseError as exc:
            raise UnreadableDatabase(f"cannot read {path}: {exc}") from exc

        tables = []
        for table_name in names:
            columns = []
            for _, col_name, col_type, *_ in conn.execute(
                f"PRAGMA table_info({_quote_identifier(table_name)})"
            ):
                hit = lowered_annotations.get((table_name.lower(), col_name.lower()))
                if hit is not None:
                    meaning = hit[2]
                    consumed.add((hit[0], hit[1]))
                else:
                    meaning = ""
                samples = tuple(
                    _render_cell(row[0], sample_max_chars)
                    for row in conn.execute(
                        f"SELECT {_quote_identifier(col_name)}"
                        f" FROM {_quote_identifier(table_name)}"
                        f" WHERE {_quote_identifier(col_name)} IS NOT NULL"
                        f" LIMIT {int(sample_count)}"
                    )
                )
                columns.append(
                    ColumnDescriptor(
                        name=col_name,
                        value_type=col_type or "",
                        meaning=meaning,
                        sample_values=samples,
                    )
                )
            tables.append(TableDescriptor(name=table_name, comment=None, columns=tuple(columns)))
    finally:
        conn.close()

    for (table, column), _ in annotations.items():
        if (table, column) not in consumed:
            logger.warning("annotation mismatch: %s.%s is not in the database", table, column)

    return DatabaseCatalog(db_id=path.stem, tables=tuple(tables), source_path=str(path))


def render_compact(catalog: DatabaseCatalog) -> str:
    """Render the one-clause-per-table form used by the linking prompt."""
    clauses = []
    for tbl in catalog.tables:
        cols = ", ".join(col.name for col in tbl.columns)
        clauses.append(f"Table {tbl.name}, Columns=[{cols}];")
    return " ".join(clauses)


def render_enriched(catalog: DatabaseCatalog, links: "SchemaLinks | None" = None) -> str:
    """Render per-column lines of value type, meaning, and one sample value.

    When ``links`` is given only the linked tables are included (catalog
    order); every link must resolve or :class:`UnresolvedLink` is raised.
    """
    included: set[str] | None = None
    if links is not None:
        for table, column in links.links:
            tbl = catalog.table(table)
            if tbl is None:
                raise UnresolvedLink(f"link names unknown table: {table}")
            if tbl.column(column) is None:
                raise UnresolvedLink(f"link names unknown column: {table}.{column}")
        included = {t.lower() for t in links.tables}

    blocks = []
    for tbl in catalog.tables:
        if included is not None and tbl.name.lower() not in included:
            continue
        header = f"Table {tbl.name}:"
        if tbl.comment:
            header = f"Table {tbl.name} ({tbl.comment}):"
        lines = [header]
        for col in tbl.columns:
            sample = col.sample_values[0] if col.sample_values else ""
            lines.append(
                f"  - {col.name} | ValueType: {col.value_type}"
                f" | Meaning: {col.meaning} | Sample: {sample}"
            )
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks)
