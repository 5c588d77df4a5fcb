class EntanglementError(Exception):
    """Base class for every error raised by the toolkit."""


# --- Input errors (CLI exit code 2) ---

class InputError(EntanglementError, ValueError):
    """Invalid user-supplied data or parameters."""


class NormalizationError(InputError):
    pass


class InvalidStateError(InputError):
    pass


class RangeError(InputError):
    pass


class BipartitionError(InputError):
    pass


class EmptyDataError(InputError):
    pass


class ConfigError(InputError):
    pass


class MalformedInputError(InputError):
    """A file row could not be parsed. `line` is the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnclassifiableError(InputError):
    pass


# --- Numerical errors (CLI exit code 3) ---

class NumericalError(EntanglementError):
    """Solver or consistency failure."""


class SolverError(NumericalError):
    def __init__(self, message: str, status: str | None = None, best_bound: float | None = None):
        self.status = status
        self.best_bound = best_bound
        super().__init__(message)


class ConsistencyError(NumericalError):
    pass


class BracketError(NumericalError):
    pass


class DegenerateStatisticsError(NumericalError):
    pass
