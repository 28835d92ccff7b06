"""Exception types shared across the package."""


class RouteGameError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(RouteGameError, ValueError):
    """Scenario document is malformed or fails schema validation.

    Also a ValueError so that callers validating plain parameter objects
    can catch it with the standard idiom.
    """


class ReducibleChainError(RouteGameError):
    """A channel transition matrix is not irreducible."""


class NoAxisError(RouteGameError):
    """No interference-minimal axis exists for the given geometry."""


class UnreachableError(RouteGameError):
    """A source cannot reach any base station through the hierarchy."""


class DeadEndError(RouteGameError):
    """Route realization reached a node with no stored strategy."""


class InvalidActionError(RouteGameError):
    """An action refers to a node outside the chooser's candidate set."""


class InstabilityError(RouteGameError):
    """Queue utilization is at or above one, so the mean delay diverges."""


class MissingContinuationError(RouteGameError):
    """A candidate node has no continuation value in the stage game."""


class NonSimplexError(RouteGameError):
    """A probability vector has negative mass or does not sum to one."""
