"""Template function backend: the model fills one of four fixed query
templates and a deterministic compiler assembles the SQL.

With generation reduced to picking a template and naming arguments, the
usual free-form failure modes (invented tables, invented columns, broken
syntax) are caught by validation before anything executes.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

from .catalog import DatabaseCatalog, render_enriched
from .errors import MalformedCall, UnknownColumn, UnknownTable
from .executor import execute_readonly
from .prompts import load_template

GET_SPECIFIC_COLUMNS = "get_specific_columns"
GET_SORTED_VALUES = "get_sorted_values_based_on_condition"
GET_AGGREGATED_VALUE = "get_aggregated_value"
GET_DISTINCT_GROUPED = "get_distinct_grouped"

TEMPLATE_SIGNATURES = {
    GET_SPECIFIC_COLUMNS: "get_specific_columns(columns, table, condition)",
    GET_SORTED_VALUES: "get_sorted_values_based_on_condition(values, table, condition, order_by, limit)",
    GET_AGGREGATED_VALUE: "get_aggregated_value(calculation, table, condition)",
    GET_DISTINCT_GROUPED: "get_distinct_grouped(columns, table, condition, group_by)",
}

_REQUIRED_ARGS = {
    GET_SPECIFIC_COLUMNS: {"columns", "table"},
    GET_SORTED_VALUES: {"values", "table", "order_by"},
    GET_AGGREGATED_VALUE: {"calculation", "table"},
    GET_DISTINCT_GROUPED: {"columns", "table"},
}
_OPTIONAL_ARGS = {
    GET_SPECIFIC_COLUMNS: {"condition"},
    GET_SORTED_VALUES: {"condition", "limit"},
    GET_AGGREGATED_VALUE: {"condition"},
    GET_DISTINCT_GROUPED: {"condition", "group_by"},
}

_BARE_IDENTIFIER = re.compile(r"^[A-Za-z_]\w*$")


@dataclass(frozen=True)
class FunctionCall:
    template: str
    args: dict


@dataclass(frozen=True)
class CompiledSql:
    sql_text: str
    source_call: FunctionCall


def _as_list(value) -> list[str]:
    if isinstance(value, str):
        return [value]
    if isinstance(value, list) and all(isinstance(v, str) for v in value):
        return list(value)
    raise MalformedCall(f"expected a column name or list of names, got {value!r}")


def parse_call(reply: str) -> FunctionCall:
    """Parse a model reply into a FunctionCall; raise MalformedCall otherwise.

    The wire form is a JSON object {"template": ..., "args": {...}}; the
    first balanced brace block in the reply is used so surrounding prose is
    tolerated.
    """
    start = reply.find("{")
    obj = None
    while start != -1 and obj is None:
        depth = 0
        for i in range(start, len(reply)):
            if reply[i] == "{":
                depth += 1
            elif reply[i] == "}":
                depth -= 1
                if depth == 0:
                    try:
                        obj = json.loads(reply[start : i + 1])
                    except json.JSONDecodeError:
                        pass
                    break
        start = reply.find("{", start + 1)
    if not isinstance(obj, dict):
        raise MalformedCall(f"no JSON call object in reply: {reply[:200]!r}")

    template = obj.get("template")
    args = obj.get("args")
    if template not in TEMPLATE_SIGNATURES:
        raise MalformedCall(f"unknown template: {template!r}")
    if not isinstance(args, dict):
        raise MalformedCall("args must be a JSON object")

    required = _REQUIRED_ARGS[template]
    allowed = required | _OPTIONAL_ARGS[template]
    missing = required - set(args)
    if missing:
        raise MalformedCall(f"missing required args for {template}: {sorted(missing)}")
    unknown = set(args) - allowed
    if unknown:
        raise MalformedCall(f"unexpected args for {template}: {sorted(unknown)}")

    normalized = dict(args)
    for key in ("columns", "values", "group_by"):
        if key in normalized and normalized[key] is not None:
            normalized[key] = _as_list(normalized[key])
    table = normalized.get("table")
    if not isinstance(table, str) or not table.strip():
        raise MalformedCall("table must be a non-empty string")
    if "limit" in normalized and normalized["limit"] is not None:
        try:
            limit = int(normalized["limit"])
        except (TypeError, ValueError):
            raise MalformedCall(f"limit must be an integer, got {normalized['limit']!r}")
        if limit < 1:
            raise MalformedCall(f"limit must be positive, got {limit}")
        normalized["limit"] = limit
    return FunctionCall(template=template, args=normalized)


def select_and_fill(question: str, catalog: DatabaseCatalog, llm, *, prompt_dir: str | None = None) -> FunctionCall:
    """Prompt with the four signatures plus the enriched schema; parse the
    reply into a call."""
    prompt = build_selection_prompt(question, catalog, prompt_dir=prompt_dir)
    reply = llm.ask(prompt).text
    return parse_call(reply)


def build_selection_prompt(question: str, catalog: DatabaseCatalog, *, prompt_dir: str | None = None) -> str:
    return load_template("function_select", prompt_dir).format(
        schema_block=render_enriched(catalog), question=question
    )


def _bare_identifiers(call: FunctionCall) -> list[str]:
    names: list[str] = []
    for key in ("columns", "values", "group_by"):
        for entry in call.args.get(key) or []:
            if _BARE_IDENTIFIER.match(entry.strip()):
                names.append(entry.strip())
    order_by = call.args.get("order_by")
    if order_by:
        # "speed DESC" style: the leading token is the column reference.
        head = str(order_by).strip().split()[0]
        if _BARE_IDENTIFIER.match(head):
            names.append(head)
    return names


def validate_call(
    call: FunctionCall,
    catalog: DatabaseCatalog,
    *,
    dry_run_db: str | Path | None = None,
) -> None:
    """Check the call against the catalog; raise on anything unresolvable.

    Bare column identifiers must exist in the named table. Free-text
    condition/calculation arguments cannot be resolved statically, so when a
    database is available (``dry_run_db``, defaulting to the catalog's source
    file) they are checked by compiling and executing with LIMIT 0.
    """
    table = catalog.table(call.args["table"])
    if table is None:
        raise UnknownTable(call.args["table"])
    for name in _bare_identifiers(call):
        if table.column(name) is None:
            raise UnknownColumn(name, table.name)

    db = dry_run_db or catalog.source_path
    if db and Path(db).is_file():
        sql = compile_call(call).sql_text
        probe = execute_readonly(f"SELECT * FROM ({sql}) LIMIT 0", db, timeout=5.0)
        if probe.status == "fail":
            raise MalformedCall(f"call does not compile to runnable SQL: {probe.error_message}")


def compile_call(call: FunctionCall) -> CompiledSql:
    """Deterministic text assembly; identical calls yield identical SQL."""
    args = call.args
    table = args["table"]
    condition = args.get("condition")
    where = f" WHERE {condition}" if condition else ""

    if call.template == GET_SPECIFIC_COLUMNS:
        sql = f"SELECT {', '.join(args['columns'])} FROM {table}{where}"
    elif call.template == GET_SORTED_VALUES:
        sql = f"SELECT {', '.join(args['values'])} FROM {table}{where} ORDER BY {args['order_by']}"
        if args.get("limit") is not None:
            sql += f" LIMIT {args['limit']}"
    elif call.template == GET_AGGREGATED_VALUE:
        sql = f"SELECT {args['calculation']} FROM {table}{where}"
    elif call.template == GET_DISTINCT_GROUPED:
        group_by = args.get("group_by")
        if group_by:
            sql = f"SELECT {', '.join(args['columns'])} FROM {table}{where} GROUP BY {', '.join(group_by)}"
        else:
            sql = f"SELECT DISTINCT {', '.join(args['columns'])} FROM {table}{where}"
    else:  # unreachable after parse_call
        raise MalformedCall(f"unknown template: {call.template}")
    return CompiledSql(sql_text=sql, source_call=call)
