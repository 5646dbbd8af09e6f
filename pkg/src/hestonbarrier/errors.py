"""Exception types raised across the package."""


class PricingError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(PricingError, ValueError):
    pass


class UnsupportedBranch(ConfigError):
    """m < 1: the variance process needs an extra change of variables we do not implement."""


class DegenerateKappaBar(PricingError):
    pass


class DegenerateCorrelation(PricingError):
    pass


class NumericalOverflow(PricingError, ArithmeticError):
    pass


class DiagonalDegeneracy(PricingError):
    """Green's function requested at zero elapsed time (s == t)."""


class SeriesDivergence(PricingError):
    pass


class NonConvergent(PricingError):
    pass


class ToleranceNotMet(PricingError):
    """Adaptive quadrature ran out of subdivisions; carries the best estimate."""

    def __init__(self, message, value=None, error=None):
        super().__init__(message)
        self.value = value
        self.error = error


class NoConvergence(PricingError):
    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = list(residuals or [])


class FdInstability(PricingError):
    pass
