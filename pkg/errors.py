"""
Exception hierarchy for the oracle FDR simulator.

Each class carries the process exit code the CLI maps it to.
"""
from typing import Optional


class OracleFdrError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 1


class ConfigError(OracleFdrError, ValueError):
    """Invalid configuration, spec text or parameter values."""

    exit_code = 1


class NumericalError(OracleFdrError, ArithmeticError):
    """Non-finite values or failed factorizations."""

    exit_code = 2


class NotPositiveDefiniteError(NumericalError):
    """Raised when a covariance matrix fails its Cholesky factorization."""

    def __init__(self, variant: str, minor_index: Optional[int] = None, detail: str = ""):
        self.variant = variant
        self.minor_index = minor_index
        message = f"{variant} covariance is not positive definite"
        if minor_index is not None:
            message += f" (leading minor of order {minor_index})"
        if detail:
            message += f": {detail}"
        super().__init__(message)


class OutputError(OracleFdrError, OSError):
    """Output path could not be written."""

    exit_code = 3
