"""Exception types raised by the height estimation chain."""


class FmcwHeightError(ValueError):
    """Base class for all domain errors of this package."""


class InfeasibleSceneError(FmcwHeightError):
    """A target reaches a non-positive distance during the simulation."""


class InsufficientObservationError(FmcwHeightError):
    """Too few AM samples for spectral processing."""


class NonMonotonicDistanceError(FmcwHeightError):
    """AM sample distances are not strictly monotonic."""


class DegenerateInputError(FmcwHeightError):
    """The AM track or spectrum carries no usable signal."""


class LinearizationError(FmcwHeightError):
    """The observation interval is too long for the linearized transform."""


class ScenarioError(FmcwHeightError):
    """A scenario file or override failed to parse or validate."""
