"""Exception types shared across the pipeline."""

from __future__ import annotations


class AskdbError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(AskdbError):
    """Invalid or inconsistent pipeline configuration."""


class UnreadableDatabase(AskdbError):
    """Database file missing, unreadable, or not a SQLite store."""


class AnnotationParseError(AskdbError):
    """Annotation file could not be parsed; carries the offending line."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class UnresolvedLink(AskdbError):
    """A schema link names a table or column absent from the catalog."""


class GatewayError(AskdbError):
    """Base class for LLM gateway failures."""


class TransportError(GatewayError):
    """Network-level failure talking to the completion service."""


class ServiceError(GatewayError):
    """Completion service answered with a non-2xx status."""

    def __init__(self, status: int, body: str):
        super().__init__(f"service returned HTTP {status}: {body[:500]}")
        self.status = status
        self.body = body


class ReplayMiss(GatewayError):
    """No stored response for a request digest; the fixture has drifted."""

    def __init__(self, digest: str):
        super().__init__(f"no recorded response for digest {digest}")
        self.digest = digest


class MalformedLLMOutput(AskdbError):
    """Model reply could not be parsed into the expected structure."""


class MissingContext(AskdbError):
    """A rewrite needs context (e.g. a timestamp) that is unavailable."""


class KeyAbsent(AskdbError):
    """A replacement key does not occur in the question; pipeline bug."""


class PreconditionViolated(AskdbError):
    """An operation was invoked outside its stated contract."""


class NoListFound(AskdbError):
    """Squeezed output contains no bracketed table.column list."""


class NoSqlFound(AskdbError):
    """Model reply contains no SQL statement."""


class ForbiddenStatement(AskdbError):
    """Statement rejected by the read-only guard."""

    def __init__(self, keyword: str):
        super().__init__(f"forbidden statement: {keyword}")
        self.keyword = keyword


class InvalidOnFailure(AskdbError):
    """Operation is defined only for successful execution outcomes."""


class MalformedCall(AskdbError):
    """Function-call reply unparseable, or arguments break the signature."""


class UnknownTable(AskdbError):
    """Function call names a table absent from the catalog."""

    def __init__(self, table: str):
        super().__init__(f"unknown table: {table}")
        self.table = table


class UnknownColumn(AskdbError):
    """Function call names a column absent from its table."""

    def __init__(self, column: str, table: str | None = None):
        where = f" in table {table}" if table else ""
        super().__init__(f"unknown column: {column}{where}")
        self.column = column
        self.table = table


class InterpreterMissing(AskdbError):
    """Configured script interpreter does not exist; configuration error."""


class UnparseableSql(AskdbError):
    """SQL text defeated the difficulty classifier's token scan."""
