"""Exception types raised across the package."""


class HestonError(Exception):
    """Base class for all errors raised by hestonfisher."""


class ParameterError(HestonError, ValueError):
    """A model, market or configuration value violates its constraints."""


class DomainError(HestonError, ArithmeticError):
    """The characteristic function produced a non-finite value."""

    def __init__(self, message, phi=None):
        super().__init__(message)
        self.phi = phi


class GridConstructionError(HestonError, ValueError):
    """The damped integrand has a vanishing denominator on the frequency grid."""


class IntegrationError(HestonError, ArithmeticError):
    """Adaptive quadrature did not converge within its evaluation budget."""

    def __init__(self, message, partial=None, error_estimate=None):
        super().__init__(message)
        self.partial = partial
        self.error_estimate = error_estimate


class NoiseVarianceError(HestonError, ValueError):
    """Noise variance must be strictly positive."""


class AssemblyError(HestonError, ValueError):
    """Fisher information could not be assembled (e.g. a day without options)."""


class FitError(HestonError, ValueError):
    """A per-day variance fit could not be carried out."""


class PanelFormatError(HestonError, ValueError):
    """An input CSV file does not conform to its schema."""

    def __init__(self, message, rejected=()):
        super().__init__(message)
        self.rejected = list(rejected)
