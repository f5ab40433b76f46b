"""Exception types raised across the package."""


class DadpError(Exception):
    """Base class for every error raised by this package."""


class DomainError(DadpError, ValueError):
    """An argument lies outside the domain where a formula is defined."""


class InvalidOfferError(DomainError):
    """A supply offer is non-positive."""


class DegenerateMarketError(DadpError):
    """The market has no meaningful clearing (all bids zero, no crossing)."""


class InfeasibleMarketError(DadpError):
    """Demand floors cannot be met by the available supply capacity."""


class ScenarioValidationError(DadpError, ValueError):
    """A scenario violates a structural invariant.

    Attributes:
        constraint: short name of the violated constraint.
    """

    def __init__(self, message, constraint=None):
        super().__init__(message)
        self.constraint = constraint


class NonConvergenceError(DadpError):
    """An iterative loop hit its iteration cap.

    Attributes:
        trace: iteration records collected up to the failure.
        best: best iterate available when the loop gave up (may be None).
    """

    def __init__(self, message, trace=None, best=None):
        super().__init__(message)
        self.trace = trace if trace is not None else []
        self.best = best


class RoutingError(DadpError):
    """A message was addressed over a channel that does not exist."""


class ConfigError(DadpError, ValueError):
    """A configuration file is malformed or has a bad field.

    Attributes:
        path: file being read.
        field: dotted field path, when known.
        line: 1-based line number, when known.
    """

    def __init__(self, message, path=None, field=None, line=None):
        super().__init__(message)
        self.path = path
        self.field = field
        self.line = line
