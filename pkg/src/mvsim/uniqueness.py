"""Twin trajectories and the negative-regularity difference energy.

``delta_energy`` measures two states against each other with the velocity
and deformation differences in ``H^{-1/2}`` and the magnetization difference
in ``H^{1/2}``. Running two nearby solutions in lockstep and fitting the
smallest density ``f`` with

    dE(t) + int dD <= dE(t0) + int f mu(dE),    mu(r) = r (1 + ln(1 + 1/r)),

gives a discrete proxy for Osgood-type uniqueness. The remaining checks fit
constants of the bilinear estimates the argument relies on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .dynamics import cross, renormalize_coeffs, step
from .errors import IncompatibleStates, InvalidArgument, NotSolenoidal, NumericalBlowup
from .littlewood_paley import low_pass, refine, sobolev_norm_hom, hdot_inner
from .spectral import AREA, SpectralField, leray_coeffs, random_field, to_coeffs, to_values

EPSILON = 0.25

# ---------------------------------------------------------------------------
# difference energy


def mean_split(f):
    """``(mean vector, f - mean)``."""
    mean = np.real(f.coeffs[:, 0, 0]).copy()
    c = f.coeffs.copy()
    c[:, 0, 0] = 0.0
    return mean, SpectralField(f.grid, c)


def _check_pair(s1, s2):
    if s1.grid != s2.grid:
        raise IncompatibleStates("states live on different grids")
    if not math.isclose(s1.t, s2.t, rel_tol=0.0, abs_tol=1e-12 * max(1.0, abs(s1.t))):
        raise IncompatibleStates(f"states are at different times {s1.t!r} and {s2.t!r}")


@dataclass(frozen=True)
class DeltaEnergy:
    """``value = (mean_u + u_h + F + M) / 2``."""

    mean_u: float
    u_h: float
    F: float
    M: float

    @property
    def value(self):
        return 0.5 * (self.mean_u + self.u_h + self.F + self.M)

    @property
    def components(self):
        return (self.mean_u, self.u_h, self.F, self.M)


def delta_energy(s1, s2):
    _check_pair(s1, s2)
    du = s1.u - s2.u
    dF = s1.F - s2.F
    dM = s1.M - s2.M
    mean, du_h = mean_split(du)
    m_l2 = float(AREA * np.sum(np.abs(dM.coeffs) ** 2))
    return DeltaEnergy(
        float(np.sum(mean**2)),
        sobolev_norm_hom(du_h, -0.5) ** 2,
        sobolev_norm_hom(dF, -0.5) ** 2,
        m_l2 + sobolev_norm_hom(dM, 0.5) ** 2,
    )


def delta_dissipation(s1, s2, params):
    """``nu |grad du|^2_{-1/2} + kappa |grad dF|^2_{-1/2} + |Lap dM|^2_{-1/2}``."""
    _check_pair(s1, s2)
    return (
        params.nu * sobolev_norm_hom(s1.u - s2.u, 0.5) ** 2
        + params.kappa * sobolev_norm_hom(s1.F - s2.F, 0.5) ** 2
        + sobolev_norm_hom(s1.M - s2.M, 1.5) ** 2
    )


def osgood_modulus(r):
    """``r (1 + ln(1 + 1/r))`` with the value 0 at ``r = 0``."""
    arr = np.asarray(r, dtype=float)
    if np.any(arr < 0):
        raise InvalidArgument("the modulus is defined for r >= 0")
    with np.errstate(divide="ignore"):
        out = np.where(arr > 0, arr * (1.0 + np.log1p(1.0 / np.where(arr > 0, arr, 1.0))), 0.0)
    return float(out) if np.ndim(r) == 0 else out


# ---------------------------------------------------------------------------
# twin runs


@dataclass(frozen=True)
class Perturbation:
    """Constraint-preserving perturbation of size ``eps`` on one field."""

    target: str = "M"
    eps: float = 0.0
    seed: int = 0
    kmax: float = 3.0

    def apply(self, state):
        if self.eps == 0.0:
            return state
        grid = state.grid
        rng = np.random.default_rng(self.seed)
        band = int(math.ceil(self.kmax))
        if self.target == "u":
            g = random_field(grid, rng, 2, kmax=self.kmax, kmin=1, decay=1.0, band=band)
            c = leray_coeffs(g.coeffs, grid)
            c /= math.sqrt(AREA * np.sum(np.abs(c) ** 2))
            return state.replace(u=SpectralField(grid, state.u.coeffs + self.eps * c), p=None)
        if self.target == "F":
            t = grid.tables
            psi = random_field(grid, rng, 2, kmax=self.kmax, kmin=1, decay=1.0, band=band).coeffs
            c = np.zeros((4,) + grid.shape, dtype=np.complex128)
            for col in range(2):
                c[col] = -1j * t.d2 * psi[col]
                c[2 + col] = 1j * t.d1 * psi[col]
            c /= math.sqrt(AREA * np.sum(np.abs(c) ** 2))
            return state.replace(F=SpectralField(grid, state.F.coeffs + self.eps * c), p=None)
        if self.target == "M":
            # push both fields through the same normalization so that only the
            # perturbation, not the projection error of the base, is measured
            g = random_field(grid, rng, 3, kmax=self.kmax, kmin=1, decay=1.0, band=band)
            c = g.coeffs / math.sqrt(AREA * np.sum(np.abs(g.coeffs) ** 2))
            shift = _normalized(state.M.coeffs + self.eps * c, grid) - _normalized(state.M.coeffs, grid)
            return state.replace(M=SpectralField(grid, state.M.coeffs + shift), p=None)
        raise InvalidArgument(f"unknown perturbation target {self.target!r}")


def _normalized(Mc, grid):
    m = to_values(Mc)
    Mc = to_coeffs(m / np.sqrt(np.sum(m * m, axis=0))) * grid.tables.keep
    for _ in range(3):
        Mc = renormalize_coeffs(Mc, grid)
    return Mc


@dataclass
class DeltaEnergyTrace:
    times: List[float] = field(default_factory=list)
    deltaE: List[float] = field(default_factory=list)
    deltaD: List[float] = field(default_factory=list)
    components: List[tuple] = field(default_factory=list)
    event: Optional[str] = None

    def record(self, s1, s2, params):
        e = delta_energy(s1, s2)
        self.times.append(s1.t)
        self.deltaE.append(e.value)
        self.deltaD.append(delta_dissipation(s1, s2, params))
        self.components.append(e.components)

    @property
    def fitted_f(self):
        return osgood_density(self.times, self.deltaE, self.deltaD)

    def rows(self):
        f = list(self.fitted_f) + [float("nan")]
        for i, t in enumerate(self.times):
            yield (t, self.deltaE[i], self.deltaD[i], *self.components[i], f[i])


TRACE_COLUMNS = ("t", "deltaE", "deltaD", "mean_u", "u_h", "F", "M", "f_hat")


def twin_run(state, params, cfg, n_steps, perturbation=None):
    """Advance ``state`` and its perturbed twin with identical steppers."""
    other = (perturbation or Perturbation()).apply(state)
    trace = DeltaEnergyTrace()
    trace.record(state, other, params)
    a, b = state, other
    for i in range(n_steps):
        try:
            a = step(a, cfg, params, step_index=i)
            b = step(b, cfg, params, step_index=i)
        except NumericalBlowup as exc:
            trace.event = f"{type(exc).__name__} at step {i}: {exc}"
            break
        trace.record(a, b, params)
    return trace


# ---------------------------------------------------------------------------
# Osgood bound


def osgood_density(times, dE, dD):
    """Forward-difference density ``f_hat`` per interval (0 where ``dE = 0``)."""
    times, dE, dD = (np.asarray(a, dtype=float) for a in (times, dE, dD))
    dt = np.diff(times)
    gain = np.diff(dE) + 0.5 * dt * (dD[1:] + dD[:-1])
    mu = osgood_modulus(dE[:-1])
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.where(mu > 0, np.maximum(0.0, gain) / (dt * mu), 0.0)
    return f


@dataclass(frozen=True)
class OsgoodReport:
    integral: float
    segments: list  # (t_start, t_end, integral) per window
    vacuous: bool

    @property
    def passed(self):
        return self.vacuous or math.isfinite(self.integral)


def osgood_bound_check(trace, singular_times: Sequence[float] = ()):
    """Integrate ``f_hat`` over windows split at zeros of ``dE`` and at singular times."""
    times = np.asarray(trace.times, dtype=float)
    dE = np.asarray(trace.deltaE, dtype=float)
    if len(times) < 2 or np.all(dE == 0):
        return OsgoodReport(0.0, [], True)
    f = trace.fitted_f
    dt = np.diff(times)
    cuts = set(np.nonzero(dE[:-1] == 0)[0])
    for ts in singular_times:
        cuts.add(int(np.searchsorted(times, ts)) - 1)
    segments = []
    start = 0
    for i in range(len(dt)):
        if i in cuts:
            if i > start:
                segments.append((times[start], times[i], float(np.sum(f[start:i] * dt[start:i]))))
            start = i + 1
    if start < len(dt):
        segments.append((times[start], times[-1], float(np.sum(f[start:] * dt[start:]))))
    total = sum(s[2] for s in segments)
    return OsgoodReport(total, segments, False)


def refinement_ratio(coarse, fine):
    """``int f_hat`` ratio between a trace and its half-step rerun."""
    a = osgood_bound_check(coarse).integral
    b = osgood_bound_check(fine).integral
    if a == 0 and b == 0:
        return 1.0
    return b / a if a > 0 else math.inf


# ---------------------------------------------------------------------------
# bilinear estimates


def _fine_values(f):
    return to_values(refine(f).coeffs)


def _grad_values(f):
    t = f.grid.tables
    c = f.coeffs
    return to_values(np.stack([1j * t.d1 * c, 1j * t.d2 * c], axis=1))


def convection_commutator_check(v, B, tol=1e-10):
    """``|<v.grad B, B>_{-1/2}| / (|grad v|_{L2} |grad B|_{-1/2} |B|_{-1/2})``."""
    t = v.grid.tables
    div = 1j * t.d1 * v.coeffs[0] + 1j * t.d2 * v.coeffs[1]
    if np.max(np.abs(div)) > tol:
        raise NotSolenoidal("v must be divergence-free")
    vf, Bf = refine(v), refine(B)
    vv = to_values(vf.coeffs)
    gB = _grad_values(Bf)  # (c, 2, ...)
    adv = SpectralField(vf.grid, to_coeffs(np.einsum("j...,ij...->i...", vv, gB)))
    lhs = abs(hdot_inner(adv, Bf, -0.5))
    if lhs == 0.0:
        return 0.0
    rhs = sobolev_norm_hom(v, 1.0) * sobolev_norm_hom(B, 0.5) * sobolev_norm_hom(B, -0.5)
    return lhs / rhs if rhs > 0 else math.inf


@dataclass(frozen=True)
class FittedBound:
    """``lhs <= C * scale + eps * absorbed``; ``C`` is the smallest passing constant."""

    lhs: float
    scale: float
    absorbed: float
    eps: float

    @property
    def C(self):
        excess = max(0.0, self.lhs - self.eps * self.absorbed)
        if excess == 0.0:
            return 0.0
        return excess / self.scale if self.scale > 0 else math.inf


def precession_paraproduct_check(M2, dM, eps=EPSILON):
    """Fit ``|<M2^h x Lap dM, Lap dM>_{-1/2}|`` against
    ``(1 + |grad M2|^2)|Lap M2|^2 |grad dM|^2_{-1/2} + eps |Lap dM|^2_{-1/2}``."""
    _, M2h = mean_split(M2)
    lap = SpectralField(dM.grid, -dM.grid.tables.dsq * dM.coeffs)
    lf = refine(lap)
    wedge = SpectralField(lf.grid, to_coeffs(cross(_fine_values(M2h), to_values(lf.coeffs))))
    lhs = abs(hdot_inner(wedge, lf, -0.5))
    gM2 = sobolev_norm_hom(M2, 1.0) ** 2
    lM2 = sobolev_norm_hom(M2, 2.0) ** 2
    scale = (1 + gM2) * lM2 * sobolev_norm_hom(dM, 0.5) ** 2
    return FittedBound(lhs, scale, sobolev_norm_hom(dM, 1.5) ** 2, eps)


def _h1(f):
    return math.sqrt(AREA * np.sum(np.abs(f.coeffs) ** 2) + sobolev_norm_hom(f, 1.0) ** 2)


def _mat(values):
    return values.reshape((2, 2) + values.shape[1:])


@dataclass(frozen=True)
class ElasticLogBound:
    lhs: float
    lhs_low: float
    lhs_high: float
    cutoff: int
    log_scale: float
    linear_scale: float
    absorbed: float
    eps: float

    @property
    def C(self):
        return FittedBound(self.lhs, self.log_scale + self.linear_scale, self.absorbed, self.eps).C


def elastic_log_estimate_check(s1, s2, elastic, eps=EPSILON):
    """Fit the logarithmic bound on ``<dW'(F) F1^T + W'(F2) dF^T, grad du>_{-1/2}``.

    ``F1`` is split at ``S_N`` with ``N = ceil(2 log2(e) ln(1 + 1/dE))``; the
    low and high parts of the first product are reported separately.
    """
    dE = delta_energy(s1, s2).value
    if dE == 0.0:
        raise InvalidArgument("states coincide; the estimate is degenerate")
    N = int(math.ceil(2.0 * math.log2(math.e) * math.log1p(1.0 / dE)))
    F1f, F2f = _fine_values(s1.F), _fine_values(s2.F)
    dWp = elastic.stress_arg(F1f) - elastic.stress_arg(F2f)
    W2 = elastic.stress_arg(F2f)
    dF = F1f - F2f
    du = s1.u - s2.u
    t = du.grid.tables
    g = np.stack([1j * t.d1 * du.coeffs, 1j * t.d2 * du.coeffs], axis=1)
    gdu = refine(SpectralField(du.grid, g.reshape((4,) + du.grid.shape)))
    low = _fine_values(low_pass(s1.F, N))
    high = F1f - low

    def pair(A, B):
        prod = np.einsum("ik...,jk...->ij...", _mat(A), _mat(B)).reshape(A.shape)
        return hdot_inner(SpectralField(gdu.grid, to_coeffs(prod)), gdu, -0.5)

    lhs_low = pair(dWp, low)
    lhs_high = pair(dWp, high)
    lhs_second = pair(W2, dF)
    lhs = abs(lhs_low + lhs_high + lhs_second)
    F2_l2 = math.sqrt(AREA * np.sum(np.abs(s2.F.coeffs) ** 2))
    FF = _h1(s1.F) + _h1(s2.F)
    all_h1 = FF + _h1(s1.u) + _h1(s2.u)
    elastic_part = (1 + F2_l2) ** 6 * FF**2
    log_scale = elastic_part * dE * math.log1p(1.0 / dE)
    linear_scale = (all_h1**1.5 + elastic_part) * dE
    absorbed = sobolev_norm_hom(du, 0.5) ** 2 + sobolev_norm_hom(s1.F - s2.F, 0.5) ** 2
    return ElasticLogBound(lhs, abs(lhs_low), abs(lhs_high), N, log_scale, linear_scale, absorbed, eps)
