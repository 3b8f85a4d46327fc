"""Exception hierarchy shared by every module."""


class CrossfireError(Exception):
    """Base class for all package errors."""


class ValidationError(CrossfireError, ValueError):
    """Invalid topology, traffic or scenario input.

    ``field`` names the offending element so callers (the CLI) can report it.
    """

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class DuplicateIdError(ValidationError):
    pass


class DanglingEndpointError(ValidationError):
    pass


class CapacityError(ValidationError):
    pass


class UnknownNodeError(ValidationError):
    pass


class NoPathError(CrossfireError):
    pass


class DisconnectError(CrossfireError):
    """A reroute would cut some sending node off from the destination."""

    def __init__(self, message, destination=None, nodes=()):
        super().__init__(message)
        self.destination = destination
        self.nodes = tuple(nodes)


class UnreachableFlowError(CrossfireError):
    def __init__(self, message, flows=()):
        super().__init__(message)
        self.flows = list(flows)


class EmptyCandidatesError(CrossfireError):
    """No link is both on a bot->target-area path and floodable via decoys."""


class InsufficientCapacityError(CrossfireError):
    def __init__(self, message, achievable=None):
        super().__init__(message)
        self.achievable = dict(achievable or {})


class NoCandidatesError(CrossfireError):
    """No destination crossing the DoS'ed links can be diverted."""


class GenerationError(CrossfireError):
    pass


class SimulationError(CrossfireError):
    """Internal invariant violated during a run (a bug, not a scenario)."""
