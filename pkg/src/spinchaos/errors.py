"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class CapacityError(RuntimeError):
    """An exhaustive computation was requested beyond its size limit."""


class NumericError(ArithmeticError):
    """A numerical routine failed to reach its tolerance."""
