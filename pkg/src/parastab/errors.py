"""Exception types raised across the package.

Each class maps onto one documented failure mode. ``ValueError`` is kept as
a base for argument problems so callers that only care about bad input can
catch the builtin.
"""


class ParastabError(Exception):
    """Base class for all package errors."""


class InvalidArgument(ParastabError, ValueError):
    pass


class DegenerateActuator(ParastabError):
    """An actuator support contains no mesh node."""


class ObliqueProjectionUndefined(ParastabError):
    """The coupling matrix between auxiliary eigenfunctions and actuators is singular."""


class InvalidBasis(ParastabError):
    pass


class NotPositiveDefinite(ParastabError):
    pass


class NotStable(ParastabError):
    pass


class NotStabilizingGuess(ParastabError):
    pass


class NumericalError(ParastabError):
    pass


class NoConvergence(ParastabError):
    """Iteration stopped at its cap; ``history`` keeps the recorded errors."""

    def __init__(self, message, history=None, result=None):
        super().__init__(message)
        self.history = list(history or [])
        self.result = result


class StepCollapse(NumericalError):
    """The adaptive Riccati step was halved below its floor."""


class InvalidWindow(ParastabError, ValueError):
    pass


class ConfigError(ParastabError):
    pass
