"""Exception hierarchy shared by all modules."""


class ExpBergmanError(Exception):
    """Base class for every error raised by the package."""


class ParameterDomainError(ExpBergmanError, ValueError):
    """A model parameter lies outside its admissible range."""


class DomainError(ExpBergmanError, ValueError):
    """A point or threshold lies outside the truncated disc."""


class ContractError(ExpBergmanError, ValueError):
    """An argument violates an operation's precondition."""


class CapacityError(ExpBergmanError, RuntimeError):
    """A construction exhausted its point budget."""


class PrecisionError(ExpBergmanError, ArithmeticError):
    """A quadrature failed its refinement test."""


class TruncationError(ExpBergmanError, ArithmeticError):
    """A truncated kernel series has a tail above tolerance."""


class NumericalConsistencyError(ExpBergmanError, ArithmeticError):
    """A computed matrix violates a structural invariant (e.g. PSD)."""


class ConfigError(ExpBergmanError, ValueError):
    """A run configuration could not be parsed or validated."""
