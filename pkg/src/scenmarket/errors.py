"""Exception hierarchy shared by all modules."""


class ScenMarketError(Exception):
    """Base class for every error raised by this package."""


class ParseError(ScenMarketError):
    pass


class ValidationError(ScenMarketError):
    """A case failed validation; ``path`` locates the offending field."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")


class DisconnectedNetwork(ScenMarketError):
    pass


class UnknownLine(ScenMarketError, KeyError):
    pass


class UnknownBus(ScenMarketError, KeyError):
    pass


class UnknownScenario(ScenMarketError, KeyError):
    pass


class NumericalFailure(ScenMarketError):
    pass


class InfeasibleError(ScenMarketError):
    """The optimization model has no feasible point."""


class MissingDuals(ScenMarketError):
    pass


class SchemeMismatch(ScenMarketError):
    pass


class AssumptionViolated(ScenMarketError):
    pass


class BasisChangeDetected(ScenMarketError):
    """Finite differences straddle a basis change.

    ``slopes`` holds the (forward, backward) quotients when both exist.
    """

    def __init__(self, message, slopes=None):
        self.slopes = slopes
        super().__init__(message)
