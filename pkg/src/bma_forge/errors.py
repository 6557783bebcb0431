"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, NumericalError -> 3,
DataFormatError and plain OSError -> 4.
"""


class BmaForgeError(Exception):
    """Base class for all package errors."""


class ConfigError(BmaForgeError, ValueError):
    """Invalid argument, precondition violation, or bad experiment config."""


class NumericalError(BmaForgeError, ArithmeticError):
    """A computation produced non-finite values or failed to converge."""


class StepSizeError(NumericalError):
    """Sampler acceptance collapsed; the step size is unusable."""


class JitterError(NumericalError):
    """Kernel matrix stayed indefinite after the full jitter escalation."""


class DegenerateCorrelationError(NumericalError):
    """A correlation was requested for a zero-variance quantity."""


class DataFormatError(BmaForgeError, ValueError):
    """A data file failed to parse (bad magic, truncated payload, ...)."""
