"""Exception and warning classes raised across the package."""

__all__ = [
    "QnsError",
    "PoleOnGrid",
    "NotStationary",
    "InvalidCounts",
    "NegativePower",
    "MalformedFile",
    "SingularSystem",
    "NegativeResidualVariance",
    "DegenerateSpectrum",
    "TooFewPoints",
    "AllClipped",
    "NoConvergence",
    "ConfigError",
    "QnsWarning",
    "ConvergenceWarning",
    "TooFewMaxima",
    "NoImprovement",
]


class QnsError(Exception):
    """Base class for all estimator and simulator errors."""


class PoleOnGrid(QnsError):
    """AR denominator vanishes (numerically) on the evaluation grid."""


class NotStationary(QnsError):
    """AR polynomial has a root on or outside the unit circle."""


class InvalidCounts(QnsError, ValueError):
    pass


class NegativePower(QnsError, ValueError):
    pass


class MalformedFile(QnsError, ValueError):
    pass


class SingularSystem(QnsError):
    pass


class NegativeResidualVariance(QnsError):
    """Autocovariance is inconsistent with an AR model of the requested order."""


class DegenerateSpectrum(QnsError):
    """Too much of the spectrum had to be floored before taking its logarithm."""


class TooFewPoints(QnsError, ValueError):
    pass


class AllClipped(QnsError):
    """Every survival probability sits at or below the fully dephased limit."""


class NoConvergence(QnsError):
    pass


class ConfigError(QnsError, ValueError):
    pass


class QnsWarning(UserWarning):
    """Base class for recoverable conditions that are reported, not raised."""


class ConvergenceWarning(QnsWarning):
    pass


class TooFewMaxima(QnsWarning):
    """Fewer local maxima than requested were found in a pseudo-spectrum."""


class NoImprovement(QnsWarning):
    """Descent never improved on its initial condition."""
