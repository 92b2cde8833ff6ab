"""Exception hierarchy shared by the package."""


class LobattoDAEError(Exception):
    """Base class for all errors raised by this package."""


class UnsupportedOrderError(LobattoDAEError, ValueError):
    """Requested stage count is outside the supported range."""


class ConjugationError(LobattoDAEError, ValueError):
    """Symplectic conjugation is undefined (a zero weight b_i)."""


class HypothesisError(LobattoDAEError):
    """A tableau violates a structural hypothesis (e.g. singular A-tilde)."""


class StabilitySingularityError(LobattoDAEError, ZeroDivisionError):
    """Id - zA is singular at the requested z."""

    def __init__(self, z):
        super().__init__(f"Id - zA is singular at z={z!r}")
        self.z = z


class InapplicableOperationError(LobattoDAEError, ValueError):
    """An R-string operation's side condition does not hold."""


class IndexViolationError(LobattoDAEError):
    """D2phi . D3g is singular, so the problem is not index 2 at this point."""


class NonconvergenceError(LobattoDAEError):
    """Newton iteration did not reach the requested tolerance."""

    def __init__(self, message, residuals=(), step_index=None):
        super().__init__(message)
        self.residuals = list(residuals)
        self.step_index = step_index


class SingularIterationMatrixError(LobattoDAEError):
    """The Newton iteration matrix of the stage system is singular."""

    def __init__(self, message, block=None, condition=None, step_index=None):
        super().__init__(message)
        self.block = block
        self.condition = condition
        self.step_index = step_index


class LayoutError(LobattoDAEError, ValueError):
    """Stage-system vector does not match the expected layout."""


class InsufficientDataError(LobattoDAEError, ValueError):
    """Too few usable points for an order fit."""

    def __init__(self, message, usable=()):
        super().__init__(message)
        self.usable = list(usable)


class StudyAbortedError(LobattoDAEError):
    """A convergence study failed at one of its step sizes."""

    def __init__(self, message, h=None):
        super().__init__(message)
        self.h = h
