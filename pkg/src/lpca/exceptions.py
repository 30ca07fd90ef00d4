"""Exception types shared across the package.

ConfigError covers bad user-supplied parameters, DataError covers unreadable
or malformed input files, NumericalError covers solver and conditioning
failures. Plain ValueError is reserved for caller contract violations
(mismatched shapes, missing entries where completeness is required).
"""


class LpcaError(Exception):
    """Base class for package errors."""


class ConfigError(LpcaError, ValueError):
    """Invalid configuration or tuning parameters."""


class DataError(LpcaError, ValueError):
    """Malformed or unreadable input data."""


class NumericalError(LpcaError, RuntimeError):
    """Numerical failure (eigensolver breakdown, ill-conditioned solve)."""
