"""Exception hierarchy shared by all lpgraph modules."""


class LpGraphError(Exception):
    """Base class for every error raised by lpgraph."""


class GraphError(LpGraphError, ValueError):
    """Invalid graph data: negative weights, conflicting duplicates, disconnection."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class ParseError(GraphError):
    """Malformed graph file; carries the offending line number when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class GraphSpecError(LpGraphError, ValueError):
    """A graph family specification that cannot be built."""


class ResourceLimitError(LpGraphError, MemoryError):
    """A computation would exceed a configured size or memory cap."""


class DomainError(LpGraphError, ValueError):
    """A spectral symbol is singular on part of the spectrum it is applied to."""


class PreconditionError(LpGraphError, ValueError):
    """An operation was called outside the hypotheses it requires."""


class InvariantViolation(LpGraphError, ArithmeticError):
    """A quantity that must be nonnegative (or bounded) came out otherwise."""


class ConvergenceError(LpGraphError, ArithmeticError):
    """A truncated series could not be certified within its term budget."""


class SchemaError(LpGraphError, ValueError):
    """Report bundles with incompatible schema versions."""
