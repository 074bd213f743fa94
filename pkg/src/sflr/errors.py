"""Exception types shared across the package.

Validation failures (bad shapes, domains, config keys) and numerical
failures (singular systems after the jitter fallback) are kept distinct
so the command line tool can map them to different exit codes.
"""


class ValidationError(ValueError):
    """Raised when inputs violate a documented precondition."""


class NumericalError(RuntimeError):
    """Raised when a linear solve fails even after the ridge fallback."""
