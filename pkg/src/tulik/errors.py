"""Exception types raised across the package."""


class TulikError(Exception):
    """Base class for all package errors."""


class ArgumentError(TulikError, ValueError):
    """An index, shape or option is outside its valid range."""


class DomainError(TulikError, ValueError):
    """A numeric argument lies outside the domain of a function."""


class InfeasibleParameterError(TulikError, ArithmeticError):
    """Model intensity is nonpositive where a positive value is required.

    ``t`` and ``u`` locate the first offending step (grid index, node).
    """

    def __init__(self, msg, t=None, u=None):
        super().__init__(msg)
        self.t = t
        self.u = u


class NumericError(TulikError, ArithmeticError):
    """Non-finite values appeared in a computation."""


class GenerationError(NumericError):
    """Simulation hit a nonpositive intensity."""

    def __init__(self, msg, t=None, prefix=None):
        super().__init__(msg)
        self.t = t
        self.prefix = prefix


class NoRootError(TulikError, ArithmeticError):
    """Baseline equation has no root (no events in the batch)."""


class UnboundedError(TulikError, ArithmeticError):
    """Baseline equation stays positive for every baseline value."""


class FormatError(TulikError, ValueError):
    """A file is malformed or does not match the data it should describe."""
