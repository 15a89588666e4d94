"""Shared exception types."""


class DomainError(ValueError):
    """An input violates an operation's domain contract (empty set, dimension
    mismatch, value outside a declared interval, ...)."""


class NumericalError(RuntimeError):
    """A computation produced a non-finite or otherwise unusable result."""
