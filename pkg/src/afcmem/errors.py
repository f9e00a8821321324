"""Exception types raised by afcmem."""


class AFCError(Exception):
    """Base class for all afcmem errors."""


class InvalidArgumentError(AFCError, ValueError):
    pass


class ResolutionError(AFCError, ValueError):
    """A grid or time step is too coarse for the feature it must resolve."""


class TailTruncationError(AFCError, ValueError):
    """Absorption has not decayed at the grid edges and no tail model was given."""


class NoMinimumError(AFCError, RuntimeError):
    pass


class CoverageError(AFCError, ValueError):
    """The response grid does not cover the input pulse spectrum."""

    def __init__(self, message, fraction):
        super().__init__(message)
        self.fraction = fraction


class NumericalFailureError(AFCError, FloatingPointError):
    """Residuals became non-finite during an optimisation."""

    def __init__(self, message, params):
        super().__init__(message)
        self.params = params
