"""Exception hierarchy shared across the package."""

from __future__ import annotations


class SpatoccError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(SpatoccError, ValueError):
    """Invalid argument or violated type invariant."""


class DataFormatError(SpatoccError, ValueError):
    """Malformed input file. Carries the 1-based row number when known."""

    def __init__(self, message: str, row: int | None = None):
        if row is not None:
            message = f"{message} (row {row})"
        super().__init__(message)
        self.row = row


class ConvergenceError(SpatoccError, RuntimeError):
    """Iterative solver exhausted its budget. Carries the final violation."""

    def __init__(self, message: str, violation: float):
        super().__init__(f"{message} (KKT violation {violation:.3e})")
        self.violation = violation


class SingularSystemError(SpatoccError, RuntimeError):
    """A linear system required by a fit is singular or not positive definite."""


class SamplerStateError(SpatoccError, RuntimeError):
    """The MCMC state became invalid mid-run. Message carries the iteration."""


class UndefinedStatisticError(SpatoccError, ValueError):
    """A statistic is undefined for the given input (e.g. zero variance)."""
