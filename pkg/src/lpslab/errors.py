"""Exception types shared across the package."""


class LpsError(Exception):
    """Base class for package errors."""


class InvalidInput(LpsError, ValueError):
    """An argument violates a documented precondition."""


class InvariantViolation(LpsError, RuntimeError):
    """A constructed object fails one of its structural invariants."""


class IllConditionedContour(LpsError, RuntimeError):
    """A contour passes too close to a spectral point with nonvanishing symbol."""


class TruncationFailure(LpsError, RuntimeError):
    """A series/integral truncation bound cannot be met."""


class PreconditionViolation(LpsError, ValueError):
    """A runtime check required before an operation fails."""
