"""Exception types shared across the package."""


class SlmError(Exception):
    """Base class for all package errors."""


class DomainError(SlmError, ValueError):
    """An input is outside the mathematical domain of an operation."""


class RangeError(SlmError, ValueError):
    """A target value lies outside the computable range (e.g. beyond sup h)."""


class GridError(SlmError, ValueError):
    """A time grid is invalid or two grids that must match do not."""


class AlignmentError(SlmError, ValueError):
    """Two curves that must share an evaluation grid do not."""


class IntegrityError(SlmError, ValueError):
    """An observation record is internally inconsistent."""


class InsufficientDataError(SlmError, ValueError):
    """Too few samples or events for the requested estimator."""


class RejectionInefficiencyError(SlmError, RuntimeError):
    """Nested rejection sampling accepted too few continuations."""


class ConfigError(SlmError, ValueError):
    """A run configuration failed validation; message names the field."""
