"""Exception types raised by the solvers, checkers and constructor."""


class Ri1dError(Exception):
    """Base class for all package errors."""


class DomainError(Ri1dError, ValueError):
    """A point lies outside the model's domain box."""


class NonFiniteError(Ri1dError, ArithmeticError):
    """An evaluation produced NaN or infinity."""


class UnboundedBelowError(Ri1dError):
    """The incremental minimizer reached the edge of the search interval."""


class NoLandingError(Ri1dError):
    """A fold jump found no admissible landing point inside the box."""


class StiffSlideError(Ri1dError):
    """The slide branch degenerated without a bracketed fold."""


class QuadratureError(Ri1dError):
    """Antiderivative tables could not be built to tolerance."""


class BoundError(Ri1dError, ValueError):
    """A driver leaves the band 1 - M <= u <= M - 1."""


class ConfigError(Ri1dError, ValueError):
    """A model, driver or run description could not be parsed."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = "" if path is None else f"{path}:"
        if line is not None:
            where += f"{line}:" if path is not None else f"line {line}:"
        if where:
            where += " "
        super().__init__(where + message)
