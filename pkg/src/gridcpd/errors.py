"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class ChangepointError(Exception):
    """Base class for every error raised by gridcpd."""


class DomainError(ChangepointError, ValueError):
    """An argument lies outside the domain of the operation."""


class ConfigError(DomainError):
    """A detector, calibration or simulation configuration is invalid."""


class GridLookupError(ChangepointError, LookupError):
    """A summary was requested for a lag that is not in the current grid."""


class NumericError(ChangepointError, ArithmeticError):
    """A numerical routine failed; ``best_estimate`` holds its last iterate if any."""

    def __init__(self, message: str, best_estimate: float | None = None) -> None:
        super().__init__(message)
        self.best_estimate = best_estimate


class DegenerateInputError(NumericError):
    """The data make a statistic undefined (e.g. a zero pre-change scale)."""


class AlarmStateError(ChangepointError, RuntimeError):
    """``step`` was called on a detector that has already raised an alarm."""


class ParseError(DomainError):
    """An input row could not be parsed; ``line`` and ``column`` are 1-based."""

    def __init__(self, message: str, line: int, column: int | None = None) -> None:
        where = f"line {line}" + (f", column {column}" if column is not None else "")
        super().__init__(f"{where}: {message}")
        self.line = line
        self.column = column
