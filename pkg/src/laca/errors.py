"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: config errors exit 2, backend errors
exit 3, data errors exit 4.
"""

from __future__ import annotations


class LacaError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(LacaError):
    """Invalid or drifted configuration."""


class ConfigInvalid(ConfigError):
    pass


class ConfigDrift(ConfigError):
    """Resume refused: the config no longer matches the manifest."""


class BackendError(LacaError):
    """Remote (or mock) backend problems."""


class BackendUnavailable(BackendError):
    """Backend unreachable after retries, or refused the connection."""


class ProtocolViolation(BackendError):
    """Backend answered, but the payload breaks the wire contract."""


class DataError(LacaError):
    """Malformed or inconsistent data files."""


class MalformedXml(DataError):
    pass


class SchemaViolation(DataError):
    """JSONL record does not match the interchange schema."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class DuplicateId(DataError):
    pass


class OverlappingAspects(DataError):
    """Two tuples claim the same token during BIO encoding."""


class UnalignableSpan(DataError):
    """A tuple span cannot be snapped to token boundaries."""


class EmptyTupleList(DataError):
    """serialize_tuples requires at least one tuple."""


class IdMismatch(DataError):
    """Gold and predicted datasets are not aligned by id."""


class EmptyInput(DataError):
    pass


class StageFailure(LacaError):
    """A pipeline stage failed; the manifest records partial progress."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause
