"""Exception hierarchy shared by the library and the CLI (exit codes live in cli.py)."""

from __future__ import annotations


class MixpropError(Exception):
    """Base class for every error raised on purpose by mixprop."""


class ConfigError(MixpropError, ValueError):
    """Bad flags, config file entries or role specs."""


class DataFormatError(MixpropError, ValueError):
    """Malformed CSV input; ``line`` is 1-based and counts the header."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericalError(MixpropError, ArithmeticError):
    """A computation could not produce a trustworthy number."""


class SingularSystemError(NumericalError):
    pass


class NonIdentifiableError(NumericalError):
    pass


class VanishingDerivativeError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    pass


class NonFiniteError(NumericalError):
    """Objective returned NaN/inf; ``abscissa`` is where it was evaluated."""

    def __init__(self, message: str, abscissa: float | None = None):
        self.abscissa = abscissa
        super().__init__(message if abscissa is None else f"{message} at x={abscissa!r}")
