"""Exception types shared across the package."""


class BudgetError(RuntimeError):
    """A configured resource cap (vertex budget, dense eigensolver cap) was hit."""


class OracleViolationError(RuntimeError):
    """A structural self-check failed, e.g. the tetrahedron facts do not hold."""


class DegenerateSpectrumError(ValueError):
    """The requested spectral quantity does not exist (everything in the kernel)."""


class UnsupportedModelError(ValueError):
    """The operation is defined for a different percolation model kind."""


class ValidationError(ValueError):
    """A configuration file or CLI argument failed validation."""
