"""Error taxonomy shared across the package.

Every data-level failure raises one of these, so the CLI can map any
caught error to exit code 1 and print its class name.
"""


class TriRetrieveError(Exception):
    """Base class for all package errors."""


class DegenerateVector(TriRetrieveError):
    """Zero, non-finite, or otherwise unusable vector."""


class DimensionMismatch(TriRetrieveError):
    """Operands disagree on vector/matrix dimension."""


class NonFinite(TriRetrieveError):
    """A score or weight is NaN or infinite."""


class EmptyInput(TriRetrieveError):
    """An operation that needs at least one element got none."""


class DuplicateDoc(TriRetrieveError):
    """Document id inserted twice into the same index or store."""


class UnknownDoc(TriRetrieveError):
    """Document id not present in the index or store."""


class MissingRepresentation(TriRetrieveError):
    """A query record lacks the representation an enabled method needs."""


class ParseError(TriRetrieveError):
    """Malformed line in an external file; carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class LengthOutOfRange(TriRetrieveError):
    """Token length falls outside every configured length range."""


class InvalidPlan(TriRetrieveError):
    """Batch plan parameters cannot be satisfied."""


class InvalidTemperature(TriRetrieveError):
    """Softmax temperature must be strictly positive."""


class InvalidSpec(TriRetrieveError):
    """Synthetic corpus spec violates its own guarantees."""
