"""Right-hand sides, pressure and the IMEX time stepper.

The scheme is Crank-Nicolson for the diffusive operators (``nu*Lap u``,
``kappa*Lap F`` and the ``Lap M`` part of the damping term) combined with
Heun's method for everything else. With ``L`` the diagonal linear operator
and ``N`` the explicit remainder, one step reads::

    X*      = A X^n + B N(X^n, t^n)
    X^{n+1} = A X^n + B/2 [N(X^n, t^n) + N(X*, t^{n+1})]

where ``A = (1 + dt/2 L)/(1 - dt/2 L)`` and ``B = dt/(1 - dt/2 L)`` per mode.
The velocity increment is Leray-projected and ``M`` is renormalized on the
configured schedule. Every physical-space product is dealiased.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConstraintDrift, InvalidArgument, MagnetizationCollapse, NumericalBlowup, StepRejected
from .spectral import SpectralField, leray_coeffs, to_coeffs, to_values

UNIT_DRIFT_LIMIT = 1e-6
COLLAPSE_THRESHOLD = 0.5


@dataclass(frozen=True)
class StepperConfig:
    dt: float
    renormalize_every: int = 1
    cfl_safety: float = 0.5

    def __post_init__(self):
        if not self.dt > 0:
            raise InvalidArgument("dt must be positive")
        if int(self.renormalize_every) < 1:
            raise InvalidArgument("renormalize_every must be >= 1")
        if not 0 < self.cfl_safety < 1:
            raise InvalidArgument("cfl_safety must lie in (0, 1)")

    def with_dt(self, dt):
        return StepperConfig(dt, self.renormalize_every, self.cfl_safety)


# ---------------------------------------------------------------------------
# pointwise algebra on samples


def cross(a, b):
    return np.stack(
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    )


def _grad(coeffs, grid):
    t = grid.tables
    return np.stack([1j * t.d1 * coeffs, 1j * t.d2 * coeffs], axis=1)


def _div_rows(coeffs, grid):
    t = grid.tables
    return 1j * t.d1 * coeffs[:, 0] + 1j * t.d2 * coeffs[:, 1]


def _dealiased(values, grid):
    return to_coeffs(values) * grid.tables.keep


class _Fields:
    """Physical samples of a state needed by the right-hand sides."""

    def __init__(self, uc, Fc, Mc, t, params, grid):
        self.grid = grid
        self.t = t
        self.u = to_values(uc)
        self.gu = to_values(_grad(uc, grid))  # gu[i, j] = d_j u_i
        self.F = to_values(Fc)
        self.gF = to_values(_grad(Fc, grid))
        self.M = to_values(Mc)
        self.gM = to_values(_grad(Mc, grid))
        self.lapM_c = -grid.tables.dsq * Mc
        self.lapM = to_values(self.lapM_c)
        H, dH, gH = params.hext.samples(grid, t, params.T)
        self.H, self.dH, self.gH = H, dH, gH
        self.params = params

    def heff(self):
        p = self.params
        return self.lapM + p.mu0 * self.H - p.aniso.grad(self.M)

    def stress(self):
        """``W'(F) F^T - grad M (.) grad M`` as a (2, 2, n, n) array."""
        Wp = self.params.elastic.stress_arg(self.F).reshape((2, 2) + self.grid.shape)
        F = self.F.reshape((2, 2) + self.grid.shape)
        s = np.einsum("ik...,jk...->ij...", Wp, F)
        s -= np.einsum("li...,lj...->ij...", self.gM, self.gM)
        return s

    def momentum(self):
        g = self.grid
        adv = np.einsum("j...,ij...->i...", self.u, self.gu)
        kelvin = self.params.mu0 * np.einsum("ji...,j...->i...", self.gH, self.M)
        body = _dealiased(kelvin - adv, g)
        sig = _dealiased(self.stress().reshape((4,) + g.shape), g)
        return body + _div_rows(sig.reshape((2, 2) + g.shape), g)

    def deformation(self):
        g = self.grid
        F = self.F.reshape((2, 2) + g.shape)
        gF = self.gF.reshape((2, 2, 2) + g.shape)  # gF[i, k, l] = d_l F_ik
        adv = np.einsum("l...,ikl...->ik...", self.u, gF)
        stretch = np.einsum("ij...,jk...->ik...", self.gu, F)
        return _dealiased((stretch - adv).reshape((4,) + g.shape), g)

    def llg(self):
        g = self.grid
        adv = np.einsum("j...,ij...->i...", self.u, self.gM)
        heff = self.heff()
        c1 = _dealiased(cross(self.M, heff), g)
        c2 = _dealiased(cross(self.M, to_values(c1)), g)
        return -_dealiased(adv, g) - c1 - c2


def _coeff_triplet(state):
    return state.u.coeffs, state.F.coeffs, state.M.coeffs


def _fields(state, params):
    uc, Fc, Mc = _coeff_triplet(state)
    return _Fields(uc, Fc, Mc, state.t, params, state.grid)


def unit_deviation(M):
    """Max ``| |M| - 1 |`` on the grid for a magnetization field."""
    m = to_values(M.coeffs)
    return float(np.max(np.abs(np.sqrt(np.sum(m * m, axis=0)) - 1.0)))


# ---------------------------------------------------------------------------
# public right-hand sides


def effective_field(M, t, params):
    """``Lap M + mu0 H_ext(t) - psi'(M)``, dealiased."""
    grid = M.grid
    m = to_values(M.coeffs)
    lap = to_values(-grid.tables.dsq * M.coeffs)
    H, _, _ = params.hext.samples(grid, t, params.T)
    return SpectralField(grid, _dealiased(lap + params.mu0 * H - params.aniso.grad(m), grid))


def llg_rhs(state, params):
    """``-(u.grad)M - M x H_eff - M x (M x H_eff)``."""
    drift = unit_deviation(state.M)
    if drift > UNIT_DRIFT_LIMIT:
        raise ConstraintDrift(f"| |M| - 1 | = {drift:.3e} exceeds {UNIT_DRIFT_LIMIT}")
    return SpectralField(state.grid, _fields(state, params).llg())


def deformation_rhs(state, params):
    """``-u.grad F + (grad u) F``; the diffusion is handled implicitly."""
    return SpectralField(state.grid, _fields(state, params).deformation())


def momentum_rhs(state, params):
    """``-u.grad u + div(W'(F)F^T - grad M (.) grad M) + mu0 (grad H)^T M``."""
    return SpectralField(state.grid, _fields(state, params).momentum())


def _pressure_from_momentum(rhs, grid):
    t = grid.tables
    div = 1j * t.d1 * rhs[0] + 1j * t.d2 * rhs[1]
    return (-t.inv_dsq * div)[None]


def pressure(state, params):
    """Pressure whose gradient is the part of the momentum forcing removed by
    the Leray projection, ``p = Lap^{-1} div(momentum_rhs)``."""
    rhs = _fields(state, params).momentum()
    return SpectralField(state.grid, _pressure_from_momentum(rhs, state.grid))


def with_pressure(state, params):
    if state.p is not None:
        return state
    return state.replace(p=pressure(state, params))


# ---------------------------------------------------------------------------
# stepping


@lru_cache(maxsize=16)
def _cn_factors(grid, dt, nu, kappa):
    lam = grid.tables.dsq
    out = {}
    for name, coef in (("u", nu), ("F", kappa), ("M", 1.0)):
        L = -coef * lam
        den = 1.0 - 0.5 * dt * L
        out[name] = ((1.0 + 0.5 * dt * L) / den, dt / den)
    return out


def _explicit(uc, Fc, Mc, t, params, grid):
    f = _Fields(uc, Fc, Mc, t, params, grid)
    Nu = leray_coeffs(f.momentum(), grid)
    NF = f.deformation()
    NM = f.llg() - f.lapM_c
    return Nu, NF, NM


def max_speed(u):
    v = to_values(u.coeffs)
    return float(np.max(np.sqrt(v[0] ** 2 + v[1] ** 2)))


def cfl_limit(state, cfg):
    speed = max_speed(state.u)
    return np.inf if speed == 0 else cfg.cfl_safety * state.grid.h / speed


def renormalize_coeffs(Mc, grid):
    m = to_values(Mc)
    norm = np.sqrt(np.sum(m * m, axis=0))
    low = float(np.min(norm))
    if not low > COLLAPSE_THRESHOLD:
        raise MagnetizationCollapse(f"min |M| = {low:.3e} below {COLLAPSE_THRESHOLD}", min_norm=low)
    return _dealiased(m / norm, grid)


def renormalize_magnetization(M):
    """Pointwise ``M/|M|``, transformed back and dealiased."""
    return SpectralField(M.grid, renormalize_coeffs(M.coeffs, M.grid))


def step(state, cfg, params, step_index=None, renormalize=None):
    """Advance ``state`` by ``cfg.dt``.

    ``step_index`` drives the renormalization schedule (every
    ``cfg.renormalize_every`` steps); ``renormalize`` overrides it.
    """
    grid = state.grid
    dt = cfg.dt
    limit = cfl_limit(state, cfg)
    if dt > limit:
        raise StepRejected(f"dt = {dt!r} exceeds CFL limit {limit!r}", dt=dt, dt_max=limit)

    fac = _cn_factors(grid, dt, params.nu, params.kappa)
    (Au, Bu), (AF, BF), (AM, BM) = fac["u"], fac["F"], fac["M"]
    uc, Fc, Mc = _coeff_triplet(state)
    t = state.t

    with np.errstate(all="ignore"):
        Nu0, NF0, NM0 = _explicit(uc, Fc, Mc, t, params, grid)
        u1 = Au * uc + Bu * Nu0
        F1 = AF * Fc + BF * NF0
        M1 = AM * Mc + BM * NM0
        Nu1, NF1, NM1 = _explicit(u1, F1, M1, t + dt, params, grid)
        u2 = leray_coeffs(Au * uc + 0.5 * Bu * (Nu0 + Nu1), grid) * grid.tables.keep
        F2 = (AF * Fc + 0.5 * BF * (NF0 + NF1)) * grid.tables.keep
        M2 = (AM * Mc + 0.5 * BM * (NM0 + NM1)) * grid.tables.keep

    for name, arr in (("u", u2), ("F", F2), ("M", M2)):
        if not np.all(np.isfinite(arr)):
            raise NumericalBlowup(
                f"non-finite {name} after step from t = {t!r}", t=t, step=step_index, reason="nan"
            )

    if renormalize is None:
        every = int(cfg.renormalize_every)
        renormalize = step_index is None or (step_index + 1) % every == 0
    if renormalize:
        try:
            M2 = renormalize_coeffs(M2, grid)
        except MagnetizationCollapse as exc:
            exc.t, exc.step = t, step_index
            raise

    return state.replace(
        t=t + dt,
        u=SpectralField(grid, u2),
        F=SpectralField(grid, F2),
        M=SpectralField(grid, M2),
        p=None,
    )


def integrate(state, params, cfg, n_steps, callback=None, start_index=0):
    """Take ``n_steps`` steps, calling ``callback(index, state)`` after each."""
    for i in range(start_index, start_index + n_steps):
        state = step(state, cfg, params, step_index=i)
        if callback is not None:
            callback(i + 1, state)
    return state
