"""Exception types raised across the planning pipeline."""


class PlanningError(Exception):
    """Base class for failures that map to CLI exit code 1."""


class Unreachable(PlanningError):
    pass


class OutOfLimits(PlanningError):
    pass


class ForceBudgetExceeded(PlanningError):
    pass


class SamplingExhausted(PlanningError):
    pass


class NoBimanualPose(PlanningError):
    pass


class NoHandoverPose(PlanningError):
    pass


class InvalidEndpoint(PlanningError):
    pass


class PlanningFailed(PlanningError):
    pass


class SceneError(ValueError):
    """Malformed or inconsistent input file (CLI exit code 2)."""
