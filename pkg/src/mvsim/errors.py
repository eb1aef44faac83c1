"""Exception types raised across the package."""


class MvsimError(Exception):
    """Base class for all package errors."""


class InvalidField(MvsimError, ValueError):
    """Input array is malformed or contains non-finite values."""


class NotRealField(MvsimError, ValueError):
    """Coefficients are not conjugate-symmetric within tolerance."""


class MeanNotZero(MvsimError, ValueError):
    """An operator that needs a mean-free argument received a nonzero mean."""


class OutOfWindow(MvsimError, ValueError):
    """Time lies outside the configured simulation window."""


class InvalidArgument(MvsimError, ValueError):
    """Scalar argument outside its admissible range."""


class InvalidRadius(MvsimError, ValueError):
    """Ball radius outside the admissible range."""


class InvalidExponents(MvsimError, ValueError):
    """Lebesgue/Sobolev exponents violate the estimate's hypotheses."""


class NotSolenoidal(MvsimError, ValueError):
    """Vector field expected to be divergence-free is not."""


class IncompatibleStates(MvsimError, ValueError):
    """Two states cannot be compared (grid or time mismatch)."""


class ConstraintDrift(MvsimError, RuntimeError):
    """The unit-length constraint on the magnetization drifted too far."""


class StepRejected(MvsimError, RuntimeError):
    """The requested time step violates the CFL bound."""

    def __init__(self, message, dt=None, dt_max=None):
        super().__init__(message)
        self.dt = dt
        self.dt_max = dt_max


class NumericalBlowup(MvsimError, RuntimeError):
    """The discrete solution lost regularity (NaN, collapse, CFL cascade).

    Attributes
    ----------
    t : float or None
        Time of the last good state.
    step : int or None
        Index of the failing step.
    history : list of (t, Q, B)
        Blow-up indicator history up to the event, if the caller recorded it.
    reason : str
    """

    def __init__(self, message, t=None, step=None, history=None, reason="nan"):
        super().__init__(message)
        self.t = t
        self.step = step
        self.history = list(history or [])
        self.reason = reason


class MagnetizationCollapse(NumericalBlowup):
    """|M| fell below the renormalization threshold (under-resolution)."""

    def __init__(self, message, min_norm=None, **kwargs):
        kwargs.setdefault("reason", "collapse")
        super().__init__(message, **kwargs)
        self.min_norm = min_norm


class CorruptSnapshot(MvsimError, IOError):
    """Snapshot file failed magic, version, length or checksum validation."""


class ConfigError(MvsimError, ValueError):
    """Configuration text could not be parsed or validated."""

    def __init__(self, message, line=None, key=None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line
        self.key = key
        self.bare_message = message
