"""Exception types shared across the package."""


class GrowthFragError(Exception):
    """Base class."""


class InvalidSpecError(GrowthFragError, ValueError):
    """A rate or kernel specification is malformed or gives negative values."""


class DomainError(GrowthFragError, ValueError):
    """An argument lies outside the domain of an operation."""


class ConfigurationError(GrowthFragError):
    """Incompatible truncation, solver or run settings."""


class NonConvergenceError(GrowthFragError):
    """Iteration budget exhausted; ``last_iterate`` holds the final state."""

    def __init__(self, message, last_iterate=None, lam=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.lam = lam


class PositivityError(GrowthFragError):
    """A computed eigenvector has a negative component beyond roundoff."""


class StepSizeError(GrowthFragError):
    """The admissible time step underflowed."""
