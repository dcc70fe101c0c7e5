"""Exception hierarchy shared by the library and the CLI.

Every error carries the process exit code the CLI reports for it:
2 for bad input, 3 for infeasible configuration, 4 for numeric failure.
"""

from typing import Optional


class NmfVarError(Exception):
    """Base class for all nmfvar errors."""

    exit_code: int = 4


class InputError(NmfVarError):
    """Malformed or missing input data (CSV, model file)."""

    exit_code = 2


class ShapeError(InputError, ValueError):
    """Matrix dimensions do not conform."""


class ConfigurationError(NmfVarError):
    """Infeasible rank/lag choice or inconsistent options."""

    exit_code = 3


class NumericError(NmfVarError):
    """NaN/inf, forbidden division, or another numeric breakdown."""

    exit_code = 4


class DegenerateError(NumericError):
    """An all-zero row, column or time point where mass is required."""

    def __init__(self, message: str, index: Optional[int] = None, label: Optional[str] = None):
        super().__init__(message)
        self.index = index
        self.label = label


class SpectralRadiusError(NumericError):
    """Power iteration did not converge and no fallback was allowed."""

    def __init__(self, message: str, best_estimate: float):
        super().__init__(f"{message} (best estimate {best_estimate:.12g})")
        self.best_estimate = best_estimate
