"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DivergenceError -> 3,
CostGuardError -> 4.
"""


class MboLabError(Exception):
    """Base class for all package errors."""


class ConfigError(MboLabError, ValueError):
    """Invalid parameters or configuration (bad grid size, missing key...)."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class DivergenceError(MboLabError, ArithmeticError):
    """Numerical blow-up detected during time stepping."""

    def __init__(self, message: str, t: float | None = None):
        super().__init__(message)
        self.t = t


class CostGuardError(MboLabError, RuntimeError):
    """A computation was refused because it would exceed its cost budget."""


class DomainError(MboLabError, ValueError):
    """Arguments lie outside the domain of a mathematical object."""


class ResolutionError(MboLabError, ValueError):
    """Requested frequency content is not resolved by the grid."""


class HypothesisError(MboLabError, ValueError):
    """A sweep configuration violates the hypothesis of the bound it tests."""


class SupportError(MboLabError, ValueError):
    """Input is not supported where the caller declared it to be."""
