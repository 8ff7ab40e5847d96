"""Exception hierarchy shared by all stochid modules."""


class StochIdError(Exception):
    """Base class for every error raised by stochid."""


class DimensionError(StochIdError, ValueError):
    """Matrix shapes are inconsistent with each other."""


class AssumptionError(StochIdError):
    """A modelling assumption (R positive definite, observability, ...) is violated."""


class RankDeficiencyError(StochIdError, ArithmeticError):
    """A matrix that must be full rank is numerically rank deficient.

    Attributes
    ----------
    sigma_min : float or None
        Smallest relevant singular value at the point of failure.
    """

    def __init__(self, message, sigma_min=None):
        super().__init__(message)
        self.sigma_min = sigma_min


class UnobservableEstimateError(RankDeficiencyError):
    """The shifted block of an estimated observability matrix is rank deficient."""


class ConvergenceError(StochIdError, ArithmeticError):
    """An iterative solver stopped before reaching its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ConfigError(StochIdError, ValueError):
    """An experiment or model configuration is malformed or rejected."""
