"""Exception types shared across the package.

The CLI maps these onto exit codes: ParameterError/ConfigError -> 2,
NumericError and subclasses -> 3, OSError -> 4.
"""


class LeditsError(Exception):
    """Base class for all package errors."""


class ParameterError(LeditsError, ValueError):
    """An argument violates a documented precondition."""


class ConfigError(LeditsError):
    """A run-config file is malformed or references missing resources."""


class CompatibilityError(ConfigError):
    """Artifacts built against different schedules were mixed."""


class NumericError(LeditsError):
    """A numeric constraint required by the algorithm does not hold."""


class InversionUndefinedError(NumericError):
    """Inversion requested with eta = 0, where sigma_t = 0 makes the
    residual division undefined."""


class ScheduleInconsistencyError(NumericError):
    """sigma_t^2 > 1 - alpha_bar_{t-1}, so the mean-predictor radicand
    is negative."""


class TrainingDivergedError(NumericError):
    """Training loss became non-finite."""
