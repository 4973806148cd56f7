"""Exception types shared across the package."""


class SalemlabError(Exception):
    pass


class DomainError(SalemlabError, ValueError):
    """An argument lies outside the range where the quantity is defined."""


class CapacityError(SalemlabError, MemoryError):
    """A dense array would exceed the configured element budget."""


class PrecisionError(SalemlabError, ArithmeticError):
    """Exact integer arithmetic could not be guaranteed."""


class ConfigurationError(SalemlabError, ValueError):
    """Incompatible grid sizes or divisibility requirements."""


class ConsistencyError(SalemlabError, AssertionError):
    """An internal identity that must hold exactly did not."""
