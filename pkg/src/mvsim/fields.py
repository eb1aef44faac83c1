"""Model closures (elastic energy, anisotropy, applied field) and the state."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np

from .errors import InvalidArgument, OutOfWindow
from .spectral import (
    Grid,
    SpectralField,
    divergence,
    forward_transform,
    inverse_transform,
    to_coeffs,
    transpose,
)


# ---------------------------------------------------------------------------
# elastic energy


@dataclass(frozen=True)
class SmoothCorrection:
    """Convex correction ``a*s*(sqrt(1 + |A|^2/s^2) - 1)``.

    Its gradient is bounded by ``a`` and its Hessian by ``a/s``, so adding it
    to the quadratic energy keeps every growth and convexity bound.
    """

    amplitude: float = 0.1
    scale: float = 1.0

    def __post_init__(self):
        if self.amplitude < 0 or self.scale <= 0:
            raise InvalidArgument("correction needs amplitude >= 0 and scale > 0")

    def value(self, sq):
        a, s = self.amplitude, self.scale
        return a * s * (np.sqrt(1.0 + sq / s**2) - 1.0)

    def grad_factor(self, sq):
        a, s = self.amplitude, self.scale
        return a / (s * np.sqrt(1.0 + sq / s**2))

    @property
    def grad_bound(self):
        return self.amplitude

    @property
    def hessian_bound(self):
        return self.amplitude / self.scale


@dataclass(frozen=True)
class ElasticModel:
    """Elastic energy ``W(A) = chi/2 |A|^2 + correction(A)``."""

    chi: float = 1.0
    correction: Optional[SmoothCorrection] = None

    def __post_init__(self):
        if not self.chi > 0:
            raise InvalidArgument("chi must be positive")

    def energy_density(self, F):
        """Pointwise ``W`` for samples of shape ``(4, ...)``."""
        sq = np.sum(F * F, axis=0)
        w = 0.5 * self.chi * sq
        if self.correction is not None:
            w = w + self.correction.value(sq)
        return w

    def stress_arg(self, F):
        """Pointwise ``W'(F)`` for samples of shape ``(4, ...)``."""
        if self.correction is None:
            return self.chi * F
        sq = np.sum(F * F, axis=0)
        return (self.chi + self.correction.grad_factor(sq)) * F

    @property
    def C1(self):
        """Constant with ``C1|A|^2 <= W(A) <= (|A|^2 + 1)/C1``."""
        upper = 0.5 * self.chi
        if self.correction is not None:
            upper += 0.5 * self.correction.amplitude
        return min(0.5 * self.chi, 1.0 / upper)

    @property
    def C2(self):
        """Bound on ``|W'(A) - chi*A|``."""
        return 0.0 if self.correction is None else self.correction.grad_bound

    @property
    def C3(self):
        """Bound on ``|W''(A)|`` (operator norm)."""
        extra = 0.0 if self.correction is None else self.correction.hessian_bound
        return self.chi + extra


def elastic_energy(F, model):
    """Scalar samples of ``W(F)``."""
    return model.energy_density(inverse_transform(F))


def elastic_stress_arg(F, model):
    """``W'(F)`` as a tensor field."""
    return SpectralField(F.grid, to_coeffs(model.stress_arg(inverse_transform(F))))


# ---------------------------------------------------------------------------
# anisotropy


@dataclass(frozen=True)
class AnisotropyModel:
    """Uniaxial energy ``psi(M) = alpha/2 (|M|^2 - (M.axis)^2)``."""

    alpha: float = 0.0
    axis: Tuple[float, float, float] = (0.0, 0.0, 1.0)

    def __post_init__(self):
        if self.alpha < 0:
            raise InvalidArgument("alpha must be nonnegative")
        a = np.asarray(self.axis, dtype=float)
        norm = np.linalg.norm(a)
        if a.shape != (3,) or norm == 0:
            raise InvalidArgument("axis must be a nonzero 3-vector")
        object.__setattr__(self, "axis", tuple(float(x) for x in a / norm))

    def density(self, M):
        a = np.asarray(self.axis).reshape((3,) + (1,) * (M.ndim - 1))
        along = np.sum(M * a, axis=0)
        return 0.5 * self.alpha * (np.sum(M * M, axis=0) - along**2)

    def grad(self, M):
        a = np.asarray(self.axis).reshape((3,) + (1,) * (M.ndim - 1))
        along = np.sum(M * a, axis=0)
        return self.alpha * (M - along * a)

    @property
    def sigma(self):
        """``sup |psi'(M)|`` over the unit sphere."""
        return self.alpha

    def sigma_sampled(self, n_theta=400):
        theta = np.linspace(0.0, np.pi, n_theta)
        phi = np.linspace(0.0, 2 * np.pi, 2 * n_theta, endpoint=False)
        th, ph = np.meshgrid(theta, phi, indexing="ij")
        pts = np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])
        return float(np.max(np.linalg.norm(self.grad(pts), axis=0)))


def anisotropy(M, model):
    return model.density(inverse_transform(M))


def anisotropy_grad(M, model):
    return SpectralField(M.grid, to_coeffs(model.grad(inverse_transform(M))))


# ---------------------------------------------------------------------------
# applied field


@dataclass(frozen=True)
class FieldMode:
    """One term ``amplitude * cos(k.x + phase_x) * cos(omega*t + phase_t)``."""

    wavevector: Tuple[int, int]
    amplitude: Tuple[float, float, float]
    omega: float = 0.0
    phase_x: float = 0.0
    phase_t: float = 0.0

    def __post_init__(self):
        k = tuple(int(v) for v in self.wavevector)
        a = tuple(float(v) for v in self.amplitude)
        if len(k) != 2 or len(a) != 3:
            raise InvalidArgument("mode needs a 2-wavevector and a 3-amplitude")
        object.__setattr__(self, "wavevector", k)
        object.__setattr__(self, "amplitude", a)


@dataclass(frozen=True)
class SupNorms:
    h: float
    dt_h: float
    grad_h: float
    n_space: int
    n_time: int


@dataclass(frozen=True)
class ExternalField:
    """Applied field: a constant plus a finite trigonometric sum."""

    constant: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    modes: Tuple[FieldMode, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "constant", tuple(float(v) for v in self.constant))
        object.__setattr__(self, "modes", tuple(self.modes))

    @property
    def is_zero(self):
        return not any(self.constant) and all(not any(m.amplitude) for m in self.modes)

    @property
    def kmax(self):
        return max((max(abs(m.wavevector[0]), abs(m.wavevector[1])) for m in self.modes), default=0)

    def _parts(self, x1, x2, t):
        shape = np.shape(x1)
        H = np.zeros((3,) + shape)
        dH = np.zeros((3,) + shape)
        grad = np.zeros((3, 2) + shape)
        H += np.reshape(self.constant, (3,) + (1,) * len(shape))
        for m in self.modes:
            k1, k2 = m.wavevector
            arg = k1 * x1 + k2 * x2 + m.phase_x
            c, s = np.cos(arg), np.sin(arg)
            ct = np.cos(m.omega * t + m.phase_t)
            st = np.sin(m.omega * t + m.phase_t)
            a = np.reshape(m.amplitude, (3,) + (1,) * len(shape))
            H += a * c * ct
            dH += -m.omega * a * c * st
            grad[:, 0] += -k1 * a * s * ct
            grad[:, 1] += -k2 * a * s * ct
        return H, dH, grad

    def _check_window(self, t, T):
        tol = 1e-9 * max(1.0, T or 0.0)
        if T is not None and not (-tol <= t <= T + tol):
            raise OutOfWindow(f"t = {t!r} lies outside [0, {T!r}]")

    def samples(self, grid, t, T=None):
        """``(H, dH/dt, grad H)`` sampled on ``grid``; ``grad`` is ``(3, 2, n, n)``."""
        self._check_window(t, T)
        x1, x2 = grid.coordinates()
        return self._parts(x1, x2, t)

    def evaluate(self, grid, t, T=None):
        H, _, _ = self.samples(grid, t, T)
        return forward_transform(H, grid)

    def sup_norms(self, T, n_space=None, n_time=None):
        """Sup norms of ``H``, ``dH/dt`` and ``grad H`` over ``[0, T] x torus``."""
        if not self.modes:
            return SupNorms(float(np.linalg.norm(self.constant)), 0.0, 0.0, 1, 1)
        n_space = n_space or max(64, 16 * (self.kmax + 1))
        wmax = max(abs(m.omega) for m in self.modes)
        n_time = n_time or int(max(257, 64 * wmax * T / np.pi + 1))
        x = np.arange(n_space) * (2 * np.pi / n_space)
        x1, x2 = np.meshgrid(x, x, indexing="ij")
        sup_h = sup_dt = sup_g = 0.0
        for t in np.linspace(0.0, T, n_time):
            H, dH, grad = self._parts(x1, x2, t)
            sup_h = max(sup_h, float(np.max(np.sqrt(np.sum(H * H, axis=0)))))
            sup_dt = max(sup_dt, float(np.max(np.sqrt(np.sum(dH * dH, axis=0)))))
            sup_g = max(sup_g, float(np.max(np.sqrt(np.sum(grad * grad, axis=(0, 1))))))
        return SupNorms(sup_h, sup_dt, sup_g, n_space, n_time)


def hext_eval(hext, t, grid, T=None):
    """Applied field at time ``t`` as a 3-component spectral field."""
    return hext.evaluate(grid, t, T)


def hext_sup_norms(hext, T, **sampling):
    return hext.sup_norms(T, **sampling)


# ---------------------------------------------------------------------------
# parameters and state


@dataclass(frozen=True)
class ModelParams:
    nu: float = 1.0
    kappa: float = 1.0
    mu0: float = 0.0
    elastic: ElasticModel = field(default_factory=ElasticModel)
    aniso: AnisotropyModel = field(default_factory=AnisotropyModel)
    hext: ExternalField = field(default_factory=ExternalField)
    T: float = 1.0

    def __post_init__(self):
        if not self.nu > 0:
            raise InvalidArgument("nu must be positive")
        if not self.kappa > 0:
            raise InvalidArgument("kappa must be positive")
        if not self.T > 0:
            raise InvalidArgument("T must be positive")

    def with_(self, **changes):
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class SimState:
    """Solver state. ``p`` caches the pressure and may be ``None``."""

    t: float
    u: SpectralField
    F: SpectralField
    M: SpectralField
    p: Optional[SpectralField] = None

    def __post_init__(self):
        for name, c in (("u", 2), ("F", 4), ("M", 3)):
            f = getattr(self, name)
            if f.components != c:
                raise InvalidArgument(f"{name} must have {c} components")
        grid = self.u.grid
        if self.F.grid != grid or self.M.grid != grid:
            raise InvalidArgument("state fields live on different grids")
        if self.p is not None and (self.p.components != 1 or self.p.grid != grid):
            raise InvalidArgument("pressure must be a scalar on the state grid")

    @property
    def grid(self):
        return self.u.grid

    def replace(self, **changes):
        return replace(self, **changes)


@dataclass(frozen=True)
class ConstraintTolerances:
    div_u: float = 1e-10
    div_FT: float = 1e-8
    unit: float = 1e-10


@dataclass(frozen=True)
class ConstraintReport:
    div_u: float
    div_FT: float
    unit: float
    tolerances: ConstraintTolerances

    @property
    def div_u_ok(self):
        return self.div_u <= self.tolerances.div_u

    @property
    def div_FT_ok(self):
        return self.div_FT <= self.tolerances.div_FT

    @property
    def unit_ok(self):
        return self.unit <= self.tolerances.unit

    @property
    def passed(self):
        return self.div_u_ok and self.div_FT_ok and self.unit_ok


def column_divergence(F):
    """``div F^T``: the divergence of every column of ``F``."""
    return divergence(transpose(F))


def validate_state(state, tolerances=ConstraintTolerances()):
    """Constraint residuals: max |coeff| of div u and div F^T, max ||M| - 1|."""
    du = float(np.max(np.abs(divergence(state.u).coeffs)))
    dF = float(np.max(np.abs(column_divergence(state.F).coeffs)))
    M = inverse_transform(state.M)
    unit = float(np.max(np.abs(np.sqrt(np.sum(M * M, axis=0)) - 1.0)))
    return ConstraintReport(du, dF, unit, tolerances)


def zero_state(grid, axis=(0.0, 0.0, 1.0), t=0.0):
    """Rest state: ``u = 0``, ``F = 0``, ``M`` constant along ``axis``."""
    M = np.zeros((3,) + grid.shape, dtype=np.complex128)
    M[:, 0, 0] = np.asarray(axis, dtype=float) / np.linalg.norm(axis)
    z = np.zeros((1,) + grid.shape, dtype=np.complex128)
    return SimState(
        t,
        SpectralField(grid, np.zeros((2,) + grid.shape, dtype=np.complex128)),
        SpectralField(grid, np.zeros((4,) + grid.shape, dtype=np.complex128)),
        SpectralField(grid, M),
        SpectralField(grid, z),
    )


__all__ = [
    "AnisotropyModel",
    "ConstraintReport",
    "ConstraintTolerances",
    "ElasticModel",
    "ExternalField",
    "FieldMode",
    "Grid",
    "ModelParams",
    "SimState",
    "SmoothCorrection",
    "SupNorms",
    "anisotropy",
    "anisotropy_grad",
    "column_divergence",
    "elastic_energy",
    "elastic_stress_arg",
    "hext_eval",
    "hext_sup_norms",
    "validate_state",
    "zero_state",
]
