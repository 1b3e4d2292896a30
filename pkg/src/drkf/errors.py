"""Exception hierarchy shared by all solver modules."""


class DRKFError(Exception):
    """Base class for every error raised by the package."""


class ModelError(DRKFError, ValueError):
    """Malformed or unsupported state-space model / configuration."""


class NonConvergence(DRKFError):
    pass


class IterationCap(NonConvergence):
    """An iterative solver hit its iteration limit before meeting its tolerance."""


class SingularResolvent(DRKFError):
    pass


class NotPD(DRKFError):
    pass


class GammaTooSmall(DRKFError):
    pass


class NonPositiveSample(DRKFError):
    pass


class Infeasible(DRKFError):
    """A feasibility problem was certified infeasible."""


class NumericalFailure(DRKFError):
    pass


class OrderCapExceeded(Infeasible):
    pass


class RootNearCircle(NumericalFailure):
    pass


class SingularSystem(NumericalFailure):
    pass


class InstabilityDetected(NumericalFailure):
    pass
