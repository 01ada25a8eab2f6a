"""Exception hierarchy shared across the package.

The CLI maps these onto its exit-code contract: ConfigError -> 1,
DataError -> 2, NumericalError -> 3.
"""


class EvtBoostError(Exception):
    """Base class for all package errors."""


class ConfigError(EvtBoostError):
    """Bad configuration: unknown keys, missing files, invalid values."""


class DataError(EvtBoostError):
    """Invalid data: malformed rows, domain violations, shape mismatches."""


class NumericalError(EvtBoostError):
    """Numerical failure: underflow, non-convergence, factorization failure."""
