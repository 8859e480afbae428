"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: NumericError -> 3, every other
M3tkError -> 2.
"""


class M3tkError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(M3tkError):
    """Array shapes are incompatible with the requested operation."""


class UsageError(M3tkError):
    """An operation was called outside its preconditions."""


class NumericError(M3tkError):
    """Degenerate or non-finite numerics (singular input, NaN loss, ...)."""


class DataError(M3tkError):
    """Input data violates a value-level contract (e.g. token index >= C)."""


class FormatError(M3tkError):
    """A file could not be parsed or failed a load-time invariant."""


class ModelError(M3tkError):
    """A body model violates a structural invariant (bad tree, weights...)."""


class ContractError(M3tkError):
    """A pluggable component (e.g. a predictor) broke its interface."""
