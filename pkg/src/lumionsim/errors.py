"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument violates an operation's precondition."""


class ConfigError(ValueError):
    """A scenario configuration is malformed or out of range."""


class NoSpareAvailable(DomainError):
    """No free, healthy spare accelerator exists for a replacement."""


class RouteUnavailable(DomainError):
    """No path exists for a connection request in the residual graph.

    Carries the index of the request that failed; routes committed for
    earlier requests remain valid.
    """

    def __init__(self, request_index: int, message: str | None = None):
        self.request_index = request_index
        super().__init__(message or f"no route available for request {request_index}")


class InvariantViolation(RuntimeError):
    """An internal consistency check failed after a computation."""
