"""Exception hierarchy shared by every module."""


class TdueError(Exception):
    """Base class for all errors raised by this package."""


class InputError(TdueError, ValueError):
    """Malformed arguments: wrong shapes, non-finite values, empty inputs."""


class InvalidHyperparameterError(InputError):
    """Length scales, signal variance or noise variance out of range."""


class NumericalSingularityError(TdueError, ArithmeticError):
    """Cholesky factorization failed even after the maximum jitter.

    Attributes
    ----------
    jitter : float
        The last jitter value that was tried.
    """

    def __init__(self, message, jitter):
        super().__init__(message)
        self.jitter = jitter


class ConsistencyError(TdueError, ArithmeticError):
    """An internal numerical invariant was violated beyond tolerance."""


class ConfigurationError(TdueError, ValueError):
    """Infeasible or invalid configuration (protocol sizes, budget, policy)."""


class IngestionError(TdueError, ValueError):
    """A dataset file could not be read.

    ``path``, ``row`` and ``column`` locate the problem when known; ``row`` counts
    data rows from 1, so the header line is not counted.
    """

    def __init__(self, message, path=None, row=None, column=None):
        loc = []
        if path is not None:
            loc.append(str(path))
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column!r}")
        super().__init__(f"{', '.join(loc)}: {message}" if loc else message)
        self.detail = message
        self.path = path
        self.row = row
        self.column = column


class EvaluationError(TdueError):
    """A run could not be evaluated (e.g. it was flagged failed)."""
