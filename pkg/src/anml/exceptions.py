"""Exception hierarchy shared by all anml modules."""


class AnmlError(Exception):
    """Base class for all errors raised by anml."""


class InvalidInputError(AnmlError, ValueError):
    """An argument violates a documented precondition."""


class ParseError(AnmlError, ValueError):
    """A dataset file could not be parsed.

    Carries the 1-based line number of the offending line when known.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericError(AnmlError, ArithmeticError):
    """A computation produced non-finite intermediates."""


class ConvergenceError(AnmlError, RuntimeError):
    """An iterative search exhausted its iteration budget."""


class SolverError(AnmlError, RuntimeError):
    """The LP solver failed to return a verifiable solution."""
