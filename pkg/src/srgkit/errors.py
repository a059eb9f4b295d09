"""Exception hierarchy shared by all srgkit modules."""


class SrgError(Exception):
    """Base class for srgkit errors."""


class DimensionError(SrgError, ValueError):
    pass


class SchemaError(SrgError, ValueError):
    """Malformed model, trajectory or noise file."""


class NotObservableError(SrgError):
    pass


class SingularFeedthrough(SrgError):
    """D is numerically singular, so the system has no causal inverse."""


class UnitCirclePole(SrgError):
    pass


class PreconditionError(SrgError):
    """A data precondition (persistency of excitation, lag, length) failed."""


class SingularConsistency(PreconditionError):
    pass


class IndefiniteQbar(PreconditionError):
    pass


class SolverInconclusive(SrgError):
    """The feasibility backend could neither certify nor refute an LMI."""

    def __init__(self, message, *, bracket=None, alpha=None, diagnostics=None):
        super().__init__(message)
        self.bracket = bracket
        self.alpha = alpha
        self.diagnostics = diagnostics or {}


class NonMonotoneError(SrgError):
    """Bisection observed feasibility on the wrong side of an infeasible point."""


class ProfileError(SrgError):
    """A gain evaluation failed inside an alpha sweep.

    `cause` is the original exception, `partial` the profile entries computed
    before the failure.
    """

    def __init__(self, alpha, cause, partial=()):
        super().__init__(f"gain evaluation failed at alpha={alpha:g}: {cause}")
        self.alpha = alpha
        self.cause = cause
        self.partial = tuple(partial)
