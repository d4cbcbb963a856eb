"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class RoadAdmmError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(RoadAdmmError, ValueError):
    """Invalid user input (configuration, dimensions, parameters)."""


class InvalidEdge(ValidationError):
    pass


class DisconnectedGraph(ValidationError):
    pass


class NotSymmetric(ValidationError):
    pass


class AllZeroSpectrum(ValidationError):
    pass


class DomainError(ValidationError):
    pass


class NotStronglyConvex(ValidationError):
    pass


class MajorityViolated(ValidationError):
    pass


class MissingFields(ValidationError):
    """A trace lacks the records (or consistency) a bound checker needs."""


class ConditionInfeasible(RoadAdmmError):
    """The network/cost pair admits no parameters giving a contraction rate below one."""


class InconsistentSystem(RoadAdmmError):
    pass


class SolverDivergence(RoadAdmmError):
    """An inner solver failed to reach its residual target."""

    def __init__(self, message: str, agent: int | None = None, iteration: int | None = None):
        super().__init__(message)
        self.agent = agent
        self.iteration = iteration
