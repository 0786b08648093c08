"""Exception hierarchy shared across all taxoria modules."""

from __future__ import annotations


class TaxoriaError(Exception):
    """Base class for all domain errors raised by this package."""


# --- taxonomy parsing / addressing ---


class MalformedDocument(TaxoriaError):
    """Input text is not valid JSON."""


class EmptyDocument(TaxoriaError):
    """Input text is empty or whitespace-only."""


class SchemaViolation(TaxoriaError):
    """Document parses as JSON but violates the canonical taxonomy schema."""


class PathNotFound(TaxoriaError):
    """A name path could not be resolved; carries the first unmatched segment."""

    def __init__(self, segment: str, message: str | None = None):
        super().__init__(message or f"path segment not found: {segment!r}")
        self.segment = segment


class InvariantViolation(TaxoriaError):
    """An operation would break a structural invariant (e.g. duplicate siblings)."""


class RootMismatch(TaxoriaError):
    """Two-taxonomy merge requires both roots to share the same name."""


# --- LLM generation ---


class LlmUnreachable(TaxoriaError):
    """The inference server could not be reached after retries."""


class UnparseableResponse(TaxoriaError):
    """No repair ladder rung could extract usable content from a response."""


class EmptyBatch(TaxoriaError):
    """Response parsed fine but yielded zero usable candidate names (soft error)."""

    def __init__(self, message: str, batch=None):
        super().__init__(message)
        self.batch = batch


# --- embeddings ---


class FormatError(TaxoriaError):
    """Word-vector file is malformed; carries the offending line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class OutOfVocabulary(TaxoriaError):
    """No token of the term was found in the static vocabulary."""


class ZeroVector(TaxoriaError):
    """Cosine similarity is undefined for a zero-magnitude vector."""


class DimensionMismatch(TaxoriaError):
    """Vectors passed to cosine have different dimensions."""


class EndpointUnreachable(TaxoriaError):
    """The contextual embedding endpoint could not be reached."""


# --- filters ---


class NoMeasurableEdges(TaxoriaError):
    """Every parent-child edge of the seed taxonomy has an OOV endpoint."""


class KgUnreachable(TaxoriaError):
    """The knowledge-graph endpoint failed or timed out (soft: retain candidate)."""


# --- orchestration ---


class ConfigError(TaxoriaError):
    """A run or filter configuration value is out of its allowed range."""


class RunNotFound(TaxoriaError):
    """No persisted run exists under the requested identifier."""


class CorruptCheckpoint(TaxoriaError):
    """A checkpoint file does not match its recorded content hash."""
