"""Exception hierarchy shared by every module."""


class BetaTestError(ValueError):
    """Base class for all errors raised by this package."""


class InputError(BetaTestError):
    """Malformed or non-finite input data."""


class DegenerateSampleError(BetaTestError):
    """Too few observations to form a centered covariance."""


class DesignError(BetaTestError):
    """Sample sizes and dimension violate a structural bound."""


class DegenerateDesignError(DesignError):
    """Design where the limiting spectral support collapses (h_n = 0)."""


class SingularPencilError(BetaTestError):
    """The pooled matrix S1 + w*S2 is numerically singular."""


class InvalidKurtosisError(BetaTestError):
    """Kurtosis values that make a limiting variance non-positive."""


class EstimatorUndefinedError(BetaTestError):
    """The kurtosis estimator needs p < n1 + n2 - 1."""


class NotPSDError(BetaTestError):
    """Matrix has a materially negative eigenvalue."""


class IntegrandError(BetaTestError):
    """Integrand returned a non-finite value at a quadrature node."""
