"""askdb: natural-language questions over SQLite databases.

The pipeline rewrites vague question terms into explicit values, links the
question to the schema in two LLM phases, generates SQL zero-shot from an
enriched schema description, and repairs it from execution feedback. A
record/replay gateway makes every stage deterministic under test.
"""

from .booster import BoostTrace, boost, build_repair_prompt
from .catalog import (
    ColumnDescriptor,
    DatabaseCatalog,
    TableDescriptor,
    build_catalog,
    load_annotations,
    render_compact,
    render_enriched,
)
from .errors import AskdbError
from .evaluation import EvalCase, EvalReport, classify_difficulty, compare_results, evaluate, load_dataset
from .executor import ExecutionOutcome, execute_readonly, guard_statement, is_empty
from .functions import CompiledSql, FunctionCall, compile_call, select_and_fill, validate_call
from .gateway import ChatMessage, CompletionRequest, CompletionResponse, LlmGateway, Transcript, digest
from .generator import GenerationPrompt, SqlCandidate, build_generation_prompt, extract_sql, generate_sql
from .linker import SchemaLinks, explain, link_schema, parse_links, squeeze, validate_links
from .pipeline import AnswerRecord, PipelineConfig, StageSwitches, run_question
from .rewriter import RewriteContext, RewriteResult, VagueTerm, rewrite

__version__ = "0.1.0"

__all__ = [
    "AnswerRecord",
    "AskdbError",
    "BoostTrace",
    "ChatMessage",
    "ColumnDescriptor",
    "CompiledSql",
    "CompletionRequest",
    "CompletionResponse",
    "DatabaseCatalog",
    "EvalCase",
    "EvalReport",
    "ExecutionOutcome",
    "FunctionCall",
    "GenerationPrompt",
    "LlmGateway",
    "PipelineConfig",
    "RewriteContext",
    "RewriteResult",
    "SchemaLinks",
    "SqlCandidate",
    "StageSwitches",
    "TableDescriptor",
    "Transcript",
    "VagueTerm",
    "boost",
    "build_catalog",
    "build_generation_prompt",
    "build_repair_prompt",
    "classify_difficulty",
    "compare_results",
    "compile_call",
    "digest",
    "evaluate",
    "execute_readonly",
    "explain",
    "extract_sql",
    "generate_sql",
    "guard_statement",
    "is_empty",
    "link_schema",
    "load_annotations",
    "load_dataset",
    "parse_links",
    "render_compact",
    "render_enriched",
    "rewrite",
    "run_question",
    "select_and_fill",
    "squeeze",
    "validate_call",
    "validate_links",
]
