"""Exception hierarchy shared by every module."""


class AnisoVoroError(Exception):
    """Base class for all package errors."""


class InvalidArgument(AnisoVoroError, ValueError):
    pass


class NotPositiveDefinite(AnisoVoroError, ValueError):
    pass


class DomainError(AnisoVoroError, ValueError):
    """A point lies outside the domain box."""


class MetricError(AnisoVoroError):
    """The metric field produced a non-finite or ill-conditioned tensor."""


class ConvergenceFailure(AnisoVoroError):
    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


class BudgetExhausted(AnisoVoroError):
    """The site budget ran out before the stop criterion was met.

    ``net`` and ``diagram`` carry the best result found so far.
    """

    def __init__(self, message, net=None, diagram=None):
        super().__init__(message)
        self.net = net
        self.diagram = diagram


class DemoConstructionFailure(AnisoVoroError):
    def __init__(self, message, sweep_log):
        super().__init__(message)
        self.sweep_log = sweep_log


class ConfigError(AnisoVoroError):
    """Invalid run configuration; ``field`` names the offending entry."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field
