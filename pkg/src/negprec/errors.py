"""Error taxonomy shared across the package.

The CLI maps these onto exit codes: UsageError -> 1, DataError -> 2,
NumericError -> 3. Library code raises them directly.
"""


class NegprecError(Exception):
    """Base class for all package errors."""


class UsageError(NegprecError):
    """Bad invocation: unknown flags, missing arguments, malformed config."""


class DataError(NegprecError):
    """Broken input data: schema violations, integrity failures, missing files."""


class NumericError(NegprecError):
    """Numeric failure: divergence, non-finite gradients, failed checks."""
