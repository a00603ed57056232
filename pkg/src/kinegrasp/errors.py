"""Exception types shared across the package."""


class KinegraspError(Exception):
    """Base class for all package-specific errors."""


class MalformedDistribution(KinegraspError):
    """A class-probability vector is empty, negative, or does not sum to one."""


class NonConvergent(KinegraspError):
    """The equilibrium solver exhausted its iteration budget."""


class GraspLost(KinegraspError):
    """The object left the reachable workspace of both fingers."""


class GraspFailed(KinegraspError):
    """No feasible initial grasp was found within the placement retry budget."""


class WindowTooLong(KinegraspError):
    """Requested window length exceeds the episode length."""


class NoInference(KinegraspError):
    """A decision was requested before any vote was cast."""
