"""Exception and warning types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigurationError(ValueError):
    """A scenario is internally inconsistent (geometry, stability, ...)."""


class SolverError(RuntimeError):
    """A linear or time-stepping solve failed or is untrustworthy."""


class AccuracyError(RuntimeError):
    """An adaptive computation could not reach its error target."""


class FitError(RuntimeError):
    """Not enough usable samples for a regression."""


class ResolutionWarning(UserWarning):
    """Mesh too coarse for the requested decay parameter."""


class AccuracyWarning(UserWarning):
    """Result returned, but expected to carry degraded accuracy."""
