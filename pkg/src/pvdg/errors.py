"""Exception types raised across the package."""


class PvdgError(Exception):
    """Base class for all package errors."""


class NoBracket(PvdgError):
    """The I-V residual never changed sign over the widened search interval."""


class OffCurve(PvdgError):
    """An operating point does not lie on the model curve for the given environment."""


class SingularJacobian(PvdgError):
    """The estimator Jacobian is (numerically) singular."""


class NoConvergence(PvdgError):
    """An iterative solver exhausted its iteration budget."""


class InfeasibleOperatingPoint(PvdgError):
    """Boost steady-state references do not exist for the requested point."""


class InfeasibleReferences(PvdgError):
    """Six-state references are complex or non-physical."""


class DegenerateDenominator(PvdgError):
    """A back-stepping duty law hit its denominator guard.

    ``channel`` is 1 for the PV-side duty and 2 for the battery-side duty.
    """

    def __init__(self, channel: int, value: float):
        super().__init__(f"duty channel {channel}: |denominator| = {abs(value):.3e} below guard")
        self.channel = channel
        self.value = value


class NonFinite(PvdgError):
    """A state component became NaN or infinite during integration."""

    def __init__(self, message: str, t: float | None = None):
        if t is not None:
            message = f"{message} (t = {t:.6g} s)"
        super().__init__(message)
        self.t = t


class NeverSettles(PvdgError):
    """A signal never enters and holds its tolerance band."""
