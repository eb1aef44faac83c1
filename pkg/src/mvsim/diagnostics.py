"""Energies, dissipation, inequality residuals and singularity diagnostics.

Every unnamed constant of an estimate is *fitted*: checks report the smallest
constant for which the inequality holds on the data they were given.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields as dc_fields
from typing import List, Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .dynamics import _Fields, with_pressure
from .errors import InvalidArgument, InvalidRadius
from .spectral import AREA, to_coeffs, to_values

# ---------------------------------------------------------------------------
# energies


@dataclass(frozen=True)
class EnergyReport:
    """Scalar energy budget of one state.

    ``zeeman_power`` is ``mu0 * int dM/dt . H_ext`` and ``zeeman_rate`` is
    ``-mu0 * int M . dH_ext/dt``; both feed the work integrals used by the
    exact energy identity and by the fitted ``K_E``.
    """

    t: float
    kinetic: float
    elastic: float
    exchange: float
    aniso: float
    zeeman: float
    diss_u: float
    diss_F: float
    diss_M: float
    E_total: float
    inequality_residual: float = float("nan")
    zeeman_power: float = 0.0
    zeeman_rate: float = 0.0

    @classmethod
    def columns(cls):
        return [f.name for f in dc_fields(cls)]

    def row(self):
        return [getattr(self, c) for c in self.columns()]

    def replace(self, **changes):
        d = {c: getattr(self, c) for c in self.columns()}
        d.update(changes)
        return EnergyReport(**d)


def _quad(values, grid):
    return float(np.sum(values) * grid.cell_area)


def _coeff_sq(c):
    return float(AREA * np.sum(np.abs(c) ** 2))


def energy_report(state, params):
    """Energies and dissipation rates of ``state``."""
    grid = state.grid
    f = _Fields(state.u.coeffs, state.F.coeffs, state.M.coeffs, state.t, params, grid)
    t = grid.tables
    kinetic = 0.5 * _coeff_sq(state.u.coeffs)
    elastic = _quad(params.elastic.energy_density(f.F), grid)
    exchange = 0.5 * float(AREA * np.sum(t.dsq * np.abs(state.M.coeffs) ** 2))
    aniso = _quad(params.aniso.density(f.M), grid)
    zeeman = -params.mu0 * _quad(np.sum(f.M * f.H, axis=0), grid)
    diss_u = params.nu * float(AREA * np.sum(t.dsq * np.abs(state.u.coeffs) ** 2))
    Wp = params.elastic.stress_arg(f.F)
    Wc = to_coeffs(Wp)
    gWp = to_values(np.concatenate([1j * t.d1 * Wc, 1j * t.d2 * Wc]))
    gF = np.concatenate([f.gF[:, 0], f.gF[:, 1]])
    diss_F = params.kappa * _quad(np.sum(gF * gWp, axis=0), grid)
    heff = f.heff()
    mh = np.sum(f.M * heff, axis=0)
    diss_M = _quad(np.sum(heff * heff, axis=0) - mh**2, grid)
    power = 0.0
    rate = 0.0
    if params.mu0 != 0.0 and not params.hext.is_zero:
        dM = to_values(f.llg())
        power = params.mu0 * _quad(np.sum(dM * f.H, axis=0), grid)
        rate = -params.mu0 * _quad(np.sum(f.M * f.dH, axis=0), grid)
    total = kinetic + elastic + exchange + aniso
    return EnergyReport(
        state.t, kinetic, elastic, exchange, aniso, zeeman, diss_u, diss_F, diss_M, total,
        zeeman_power=power, zeeman_rate=rate,
    )


def forcing_constant(params, **sampling):
    """``2 mu0 (sup|H_ext| + T sup|dH_ext/dt|)``."""
    s = params.hext.sup_norms(params.T, **sampling)
    return 2.0 * params.mu0 * (s.h + params.T * s.dt_h)


def cumulative(times, values):
    """Cumulative trapezoid integral starting at 0."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(times) < 2:
        return np.zeros(len(times))
    return cumulative_trapezoid(values, times, initial=0.0)


@dataclass(frozen=True)
class ResidualSeries:
    times: np.ndarray
    residual: np.ndarray
    slack: float
    E0: float = 0.0
    K: float = 0.0

    @property
    def passed(self):
        return bool(np.all(self.residual <= self.slack))

    @property
    def max_residual(self):
        return float(np.max(self.residual)) if len(self.residual) else 0.0


def _series(reports, name):
    return np.array([getattr(r, name) for r in reports], dtype=float)


def energy_inequality_residual(reports, params, slack=None, K=None):
    """``2E(t) + 2 int (diss_u + diss_M) - (2E_0 + K)`` along ``reports``."""
    times = _series(reports, "t")
    E = _series(reports, "E_total")
    diss = _series(reports, "diss_u") + _series(reports, "diss_M")
    K = forcing_constant(params) if K is None else K
    E0 = E[0]
    res = 2 * E + 2 * cumulative(times, diss) - (2 * E0 + K)
    if slack is None:
        slack = 1e-6 * (1 + 2 * E0 + K)
    return ResidualSeries(times, res, slack, E0, K)


def with_inequality_residual(reports, params, K=None):
    series = energy_inequality_residual(reports, params, K=K)
    return [r.replace(inequality_residual=float(v)) for r, v in zip(reports, series.residual)]


def energy_identity_residual(reports):
    """Residual of the exact energy balance including Zeeman and work terms.

    ``[2E - 2mu0 int M.H](t) + 2 int (diss_u + diss_F + diss_M)`` minus the
    same bracket at ``t = 0`` minus ``-2 mu0 int int M . dH/dt``.
    """
    times = _series(reports, "t")
    lhs = 2 * _series(reports, "E_total") + 2 * _series(reports, "zeeman")
    diss = _series(reports, "diss_u") + _series(reports, "diss_F") + _series(reports, "diss_M")
    work = 2 * cumulative(times, _series(reports, "zeeman_rate"))
    return times, lhs + 2 * cumulative(times, diss) - lhs[0] - work


def magnetization_dissipation(M, lapM, H, psi_grad, mu0):
    """Both sides of the expanded damping identity on samples.

    Returns ``(direct, expanded)`` where ``direct = |H_eff|^2 - (M.H_eff)^2``
    and ``expanded`` is the termwise expansion valid for ``|M| = 1``.
    The expansion carries ``mu0**2`` on the ``(M.H)^2`` term.
    """
    heff = lapM + mu0 * H - psi_grad
    direct = np.sum(heff * heff, axis=0) - np.sum(M * heff, axis=0) ** 2
    return direct, _expanded(M, lapM, H, psi_grad, mu0, mu0 * mu0)


def _expanded(M, A, H, P, mu0, mh_coef):
    dot = lambda a, b: np.sum(a * b, axis=0)  # noqa: E731
    MA, MH, MP = dot(M, A), dot(M, H), dot(M, P)
    grad_sq = -MA  # |grad M|^2 = -M.Lap M on unit fields
    return (
        dot(A, A) - grad_sq**2 + mu0**2 * dot(H, H) - mh_coef * MH**2
        + 2 * mu0 * (dot(A, H) - MA * MH)
        + dot(P, P) - MP**2 - 2 * dot(A, P) - 2 * mu0 * dot(H, P)
        + 2 * MA * MP + 2 * mu0 * MH * MP
    )


# ---------------------------------------------------------------------------
# norms and the blow-up indicator


@dataclass(frozen=True)
class StateNorms:
    """Squared L2 norms of a state and its derivatives."""

    u: float
    grad_u: float
    F: float
    grad_F: float
    grad_M: float
    lap_M: float

    @property
    def Q(self):
        return self.grad_u + self.grad_F + self.lap_M

    @property
    def B(self):
        return (1 + self.u + self.F + self.grad_M) * (1 + self.Q) ** 2


def state_norms(state):
    t = state.grid.tables
    w = lambda c, m: float(AREA * np.sum(m * np.abs(c) ** 2))  # noqa: E731
    return StateNorms(
        w(state.u.coeffs, 1.0),
        w(state.u.coeffs, t.dsq),
        w(state.F.coeffs, 1.0),
        w(state.F.coeffs, t.dsq),
        w(state.M.coeffs, t.dsq),
        w(state.M.coeffs, t.dsq**2),
    )


def blowup_indicator(state, params=None):
    """``(Q, B)`` with ``Q = |grad u|^2 + |grad F|^2 + |Lap M|^2``."""
    n = state_norms(state)
    return n.Q, n.B


def envelope_fit(times, Q, B):
    """Smallest ``C`` with ``dQ/dt <= C B`` on forward differences."""
    times, Q, B = map(lambda a: np.asarray(a, dtype=float), (times, Q, B))
    if len(times) < 2:
        return 0.0
    dQ = np.diff(Q) / np.diff(times)
    Bm = 0.5 * (B[1:] + B[:-1])
    return float(max(0.0, np.max(dQ / Bm)))


def gradF_budget(E0, C):
    """``L = 2 E0 exp(C E0)``."""
    if C <= 0:
        raise InvalidArgument("C must be positive")
    return 2.0 * E0 * math.exp(C * E0)


@dataclass(frozen=True)
class GradFCheck:
    times: np.ndarray
    lhs: np.ndarray
    dissipation_integral: np.ndarray
    F0_sq: float
    C_fit: float

    @property
    def passed(self):
        return math.isfinite(self.C_fit)

    def rhs(self, C=None):
        C = self.C_fit if C is None else C
        return self.F0_sq * np.exp(C * self.dissipation_integral)


def gradF_check(times, norms):
    """Fit ``C`` in ``int |grad F|^2 <= |F0|^2 exp(C int |grad u|^2)``."""
    times = np.asarray(times, dtype=float)
    gF = np.array([n.grad_F for n in norms])
    gu = np.array([n.grad_u for n in norms])
    lhs = cumulative(times, gF)
    diss = cumulative(times, gu)
    F0 = norms[0].F
    C = 0.0
    for a, b in zip(lhs, diss):
        if a <= F0 * (1 + 1e-12):
            continue
        if b <= 0 or F0 <= 0:
            C = math.inf
            break
        C = max(C, math.log(a / F0) / b)
    return GradFCheck(times, lhs, diss, F0, C)


# ---------------------------------------------------------------------------
# local energies


def periodic_offsets(grid, x0):
    x1, x2 = grid.coordinates()
    d1 = (x1 - x0[0] + np.pi) % (2 * np.pi) - np.pi
    d2 = (x2 - x0[1] + np.pi) % (2 * np.pi) - np.pi
    return d1, d2


def ball_weight(grid, x0, R, width=None):
    """Indicator of ``B_R(x0)`` with a linear ramp one grid cell wide."""
    width = grid.h if width is None else width
    d1, d2 = periodic_offsets(grid, x0)
    r = np.hypot(d1, d2)
    return np.clip((R - r) / width + 0.5, 0.0, 1.0)


def _check_radius(R, upper=np.pi):
    if not 0 < R < upper:
        raise InvalidRadius(f"radius {R!r} must lie in (0, {upper!r})")


def gradient_density(M):
    t = M.grid.tables
    g = to_values(np.concatenate([1j * t.d1 * M.coeffs, 1j * t.d2 * M.coeffs]))
    return np.sum(g * g, axis=0)


def local_energy(M, x0, R):
    """``int_{B_R(x0)} |grad M|^2`` with a mollified indicator."""
    _check_radius(R)
    return _quad(gradient_density(M) * ball_weight(M.grid, x0, R), M.grid)


def local_integrals(density, grid, R):
    """``int_{B_R(x)} density`` for every grid point ``x`` (FFT correlation)."""
    w = ball_weight(grid, (0.0, 0.0), R)
    out = np.fft.irfft2(np.fft.rfft2(density) * np.fft.rfft2(w), s=grid.shape)
    return np.maximum(out * grid.cell_area, 0.0)


@dataclass(frozen=True)
class LocalEnergyScan:
    R: float
    centers: np.ndarray  # (m, 2) physical coordinates
    values: np.ndarray  # (m,)
    t: float = 0.0

    @property
    def max_value(self):
        return float(np.max(self.values))

    @property
    def argmax(self):
        return tuple(float(v) for v in self.centers[int(np.argmax(self.values))])


def local_energy_scan(M, R, stride=1, t=0.0):
    _check_radius(R)
    grid = M.grid
    vals = local_integrals(gradient_density(M), grid, R)[::stride, ::stride]
    x1, x2 = grid.coordinates()
    centers = np.stack([x1[::stride, ::stride].ravel(), x2[::stride, ::stride].ravel()], axis=1)
    return LocalEnergyScan(R, centers, vals.ravel(), t)


# ---------------------------------------------------------------------------
# Struwe-type interpolation


def struwe_ratio(f, R):
    """``int|f|^4 / (sup_x int_{B_R(x)} |f|^2 (int|grad f|^2 + R^-2 int|f|^2))``."""
    _check_radius(R)
    grid = f.grid
    v = to_values(f.coeffs)
    sq = np.sum(v * v, axis=0)
    num = _quad(sq * sq, grid)
    if num == 0.0:
        return 0.0
    local = float(np.max(local_integrals(sq, grid, R)))
    grad = float(AREA * np.sum(grid.tables.dsq * np.abs(f.coeffs) ** 2))
    return num / (local * (grad + _quad(sq, grid) / R**2))


@dataclass(frozen=True)
class StruweResult:
    ratios: np.ndarray
    R: float

    @property
    def C1(self):
        return float(np.max(self.ratios)) if len(self.ratios) else 0.0

    @property
    def eps1(self):
        return math.inf if self.C1 == 0 else 1.0 / (4.0 * self.C1)


def struwe_interpolation_check(samples, R):
    return StruweResult(np.array([struwe_ratio(f, R) for f in samples]), R)


# ---------------------------------------------------------------------------
# trajectories


@dataclass
class Trajectory:
    """Per-step diagnostics collected while integrating."""

    params: object
    times: List[float] = field(default_factory=list)
    reports: List[EnergyReport] = field(default_factory=list)
    norms: List[StateNorms] = field(default_factory=list)
    scans: List[Optional[LocalEnergyScan]] = field(default_factory=list)
    states: List[object] = field(default_factory=list)
    scan_radius: Optional[float] = None
    scan_stride: int = 1
    keep_states: bool = False
    grid: object = None

    def record(self, state):
        self.grid = state.grid
        self.times.append(state.t)
        self.reports.append(energy_report(state, self.params))
        self.norms.append(state_norms(state))
        scan = None
        if self.scan_radius is not None:
            scan = local_energy_scan(state.M, self.scan_radius, self.scan_stride, state.t)
        self.scans.append(scan)
        if self.keep_states:
            self.states.append(with_pressure(state, self.params))

    @property
    def Q(self):
        return np.array([n.Q for n in self.norms])

    @property
    def B(self):
        return np.array([n.B for n in self.norms])

    @property
    def E(self):
        return np.array([r.E_total for r in self.reports])

    def indicator_history(self):
        return [(t, n.Q, n.B) for t, n in zip(self.times, self.norms)]


# ---------------------------------------------------------------------------
# small-energy bound


@dataclass(frozen=True)
class SmallEnergyReport:
    applicable: bool
    reason: str
    sup_local: float
    eps1: float
    lhs: float
    budget: float
    C_fit: float
    margin: Optional[float] = None

    @property
    def passed(self):
        if not self.applicable:
            return True
        return math.isfinite(self.C_fit) and (self.margin is None or self.margin >= 0)


def small_energy_bound_check(traj, R, eps1, C_ref=None):
    """Check ``int int |grad u|^2 + |Lap M|^2`` against the small-energy budget.

    The budget is ``(1 + T R^-2)(2E_0 + K) + |H_ext|^2_{L2L2} + T``; ``C_fit``
    is the ratio of the two sides, and ``margin = 1 - lhs/(C_ref budget)``
    when a reference constant is given.
    """
    params = traj.params
    sup_local = 0.0
    for s in traj.scans:
        if s is None:
            raise InvalidArgument("trajectory has no local-energy scans")
        if not np.isclose(s.R, R):
            raise InvalidArgument("scan radius differs from R")
        sup_local = max(sup_local, s.max_value)
    times = np.asarray(traj.times)
    T = float(times[-1] - times[0])
    lhs_density = np.array([n.grad_u + n.lap_M for n in traj.norms])
    lhs = float(cumulative(times, lhs_density)[-1])
    E0 = traj.reports[0].E_total
    K = forcing_constant(params)
    h2 = [_hext_l2_sq(params.hext, traj.grid, t) for t in times]
    budget = (1 + T / R**2) * (2 * E0 + K) + float(cumulative(times, h2)[-1]) + T
    if sup_local >= eps1:
        return SmallEnergyReport(False, "local energy reaches eps1; precondition unmet",
                                 sup_local, eps1, lhs, budget, math.nan)
    C_fit = lhs / budget if budget > 0 else (0.0 if lhs == 0 else math.inf)
    margin = None if C_ref is None else 1.0 - lhs / (C_ref * budget)
    return SmallEnergyReport(True, "", sup_local, eps1, lhs, budget, C_fit, margin)


def _hext_l2_sq(hext, grid, t):
    H, _, _ = hext.samples(grid, t)
    return _quad(np.sum(H * H, axis=0), grid)


# ---------------------------------------------------------------------------
# local energy inequality


def _smoothstep(x):
    """C-infinity step ``S`` with derivatives, zero for x<=0 and one for x>=1."""
    x = np.asarray(x, dtype=float)
    S = np.where(x >= 1, 1.0, 0.0)
    dS = np.zeros_like(x)
    d2S = np.zeros_like(x)
    inner = (x > 0) & (x < 1)
    xi = x[inner]
    h = 1.0 / xi - 1.0 / (1.0 - xi)
    s = 1.0 / (1.0 + np.exp(h))
    a = 1.0 / xi**2 + 1.0 / (1.0 - xi) ** 2
    da = -2.0 / xi**3 + 2.0 / (1.0 - xi) ** 3
    ds = s * (1 - s) * a
    S[inner] = s
    dS[inner] = ds
    d2S[inner] = ds * (1 - 2 * s) * a + s * (1 - s) * da
    return S, dS, d2S


def cutoff(grid, x0, R):
    """Radial bump equal to 1 on ``B_R(x0)`` and supported in ``B_2R(x0)``.

    Returns ``(phi, |grad phi|, |Hess phi|)`` sampled on the grid.
    """
    if not 0 < 2 * R < np.pi:
        raise InvalidRadius(f"need 0 < 2R < pi, got R = {R!r}")
    d1, d2 = periodic_offsets(grid, x0)
    r = np.hypot(d1, d2)
    S, dS, d2S = _smoothstep((2 * R - r) / R)
    dphi = -dS / R
    d2phi = d2S / R**2
    with np.errstate(divide="ignore", invalid="ignore"):
        radial = np.where(r > 0, dphi / r, 0.0)
    return S, np.abs(dphi), np.sqrt(d2phi**2 + radial**2)


@dataclass(frozen=True)
class LocalEnergyResidual:
    times: np.ndarray
    left: np.ndarray  # energy in the cutoff plus accumulated dissipation
    initial: float
    brace: np.ndarray  # accumulated sum of the five bounding integrals
    terms: dict  # every integral, accumulated where the statement integrates in time
    C: float
    C_fit: float
    slack: float

    @property
    def residual(self):
        return self.left - self.initial - self.C * self.brace

    @property
    def passed(self):
        return math.isfinite(self.C) and bool(np.all(self.residual <= self.slack))


def _local_terms(state, params, phi, gphi, hphi):
    grid = state.grid
    f = _Fields(state.u.coeffs, state.F.coeffs, state.M.coeffs, state.t, params, grid)
    chi = params.elastic.chi
    q = lambda v: _quad(v, grid)  # noqa: E731
    u2 = np.sum(f.u**2, axis=0)
    F2 = np.sum(f.F**2, axis=0)
    gM2 = np.sum(f.gM**2, axis=(0, 1))
    gu2 = np.sum(f.gu**2, axis=(0, 1))
    gF2 = np.sum(f.gF**2, axis=(0, 1))
    damp = f.lapM + gM2 * f.M
    p = np.abs(to_values(state.p.coeffs[0])) if state.p is not None else np.zeros(grid.shape)
    umag = np.sqrt(u2)
    phi2 = phi**2
    Wp = params.elastic.stress_arg(f.F)
    gap = np.sqrt(np.sum((chi * f.F - Wp) ** 2, axis=0))
    ext = np.sum(f.H**2, axis=0) + np.sum(f.gH**2, axis=(0, 1)) + np.sum(params.aniso.grad(f.M) ** 2, axis=0)
    flux = umag * phi * gphi
    shape = gphi**2 + phi * hphi
    return {
        "u2": q(u2 * phi2),
        "chiF2": q(chi * F2 * phi2),
        "gradM2": q(gM2 * phi2),
        "diss_u": q(params.nu * gu2 * phi2),
        "diss_F": q(params.kappa * chi * gF2 * phi2),
        "diss_M": q(np.sum(damp**2, axis=0) * phi2),
        "flux_u": q(u2 * flux),
        "flux_F": q(F2 * flux),
        "flux_gradM": q(gM2 * flux),
        "flux_p": q(p * flux),
        "shape_u": q(u2 * shape),
        "shape_F": q(F2 * shape),
        "shape_gradM": q(gM2 * shape),
        "elastic_gap": q(np.sqrt(gu2) * np.sqrt(F2) * gap * phi2),
        "mass_u": q(u2 * phi2),
        "ext_H": q(np.sum(f.H**2, axis=0) * phi2),
        "ext_gradH": q(np.sum(f.gH**2, axis=(0, 1)) * phi2),
        "ext_psi": q(np.sum(params.aniso.grad(f.M) ** 2, axis=0) * phi2),
        "_ext": q(ext * phi2),
    }


_BRACE = ("flux_u", "flux_F", "flux_gradM", "flux_p", "shape_u", "shape_F", "shape_gradM",
          "elastic_gap", "mass_u", "ext_H", "ext_gradH", "ext_psi")


def local_energy_inequality_residual(states, params, x0=(np.pi, np.pi), R=0.5, C=None,
                                     global_cutoff=False, slack=None):
    """Evaluate both sides of the localized energy inequality along ``states``.

    ``left(t) = int (|u|^2 + chi|F|^2 + |grad M|^2) phi^2
    + int_0^t int (nu|grad u|^2 + kappa chi|grad F|^2 + |Lap M + |grad M|^2 M|^2) phi^2``
    is compared with its initial value plus ``C`` times the accumulated
    flux, cutoff-shape, elastic-gap, mass and forcing integrals. ``C_fit`` is
    the smallest constant for which the inequality holds; the residual uses
    ``C`` when given and ``C_fit`` otherwise.
    """
    if not states:
        raise InvalidArgument("need at least one state")
    grid = states[0].grid
    if global_cutoff:
        phi, gphi, hphi = np.ones(grid.shape), np.zeros(grid.shape), np.zeros(grid.shape)
    else:
        phi, gphi, hphi = cutoff(grid, x0, R)
    rows = [_local_terms(with_pressure(s, params), params, phi, gphi, hphi) for s in states]
    times = np.array([s.t for s in states])
    terms = {}
    for key in rows[0]:
        vals = np.array([r[key] for r in rows])
        timed = key.startswith(("diss", "flux", "shape", "elastic", "mass", "ext"))
        terms[key] = cumulative(times, vals) if timed else vals
    energy = terms["u2"] + terms["chiF2"] + terms["gradM2"]
    left = energy + terms["diss_u"] + terms["diss_F"] + terms["diss_M"]
    initial = float(energy[0])
    brace = sum(terms[k] for k in _BRACE)
    excess = left - initial
    C_fit = 0.0
    for e, b in zip(excess, brace):
        if e <= 0:
            continue
        C_fit = max(C_fit, e / b) if b > 0 else math.inf
    if slack is None:
        slack = 1e-10 * (1 + abs(initial))
    del terms["_ext"]
    return LocalEnergyResidual(times, left, initial, brace, terms,
                               C_fit if C is None else float(C), C_fit, slack)


# ---------------------------------------------------------------------------
# singular times


@dataclass(frozen=True)
class Candidate:
    step: int
    t: float
    center: tuple
    local_energy: float
    growth: float


@dataclass(frozen=True)
class LedgerRow:
    index: int
    t: float
    E_before: float
    E_after: float
    bound: float

    @property
    def ok(self):
        return 2 * self.E_after <= self.bound


@dataclass(frozen=True)
class SingularityReport:
    candidates: List[Candidate]
    ledger: List[LedgerRow]
    K_E: float
    eps1: float


def fit_work_constant(times, power):
    """Smallest ``K_E`` with ``2 int_a^b P <= K_E sqrt(b - a)`` for all a < b."""
    times = np.asarray(times, dtype=float)
    W = 2.0 * cumulative(times, power)
    best = 0.0
    for i in range(len(times) - 1):
        gain = W[i + 1 :] - W[i]
        span = np.sqrt(times[i + 1 :] - times[i])
        best = max(best, float(np.max(gain / span)))
    return best


def singularity_scan(traj, eps0, R=None, rate=50.0, eps1=None):
    """Flag steps where the local energy reaches ``eps0`` while ``Q`` surges.

    A step is flagged when the scanned maximum of ``int_{B_R}|grad M|^2`` is
    at least ``eps0`` and ``log Q`` grew at least ``rate`` per unit time over
    the preceding step. Consecutive flagged steps form one candidate, placed
    at the last step of the run of flags.
    """
    Q = traj.Q
    flagged = []
    for i in range(1, len(traj.scans)):
        scan = traj.scans[i]
        if scan is None:
            raise InvalidArgument("trajectory has no local-energy scans")
        if R is not None and not np.isclose(scan.R, R):
            raise InvalidArgument("scan radius differs from R")
        span = traj.times[i] - traj.times[i - 1]
        if Q[i - 1] > 0:
            growth = math.log(Q[i] / Q[i - 1]) / span if Q[i] > 0 else -math.inf
        else:
            growth = math.inf if Q[i] > 0 else 0.0
        if scan.max_value >= eps0 and growth >= rate:
            flagged.append((i, growth))
    groups = []
    for i, growth in flagged:
        if groups and groups[-1][-1][0] == i - 1:
            groups[-1].append((i, growth))
        else:
            groups.append([(i, growth)])
    candidates = []
    for g in groups:
        i, growth = g[-1]
        scan = traj.scans[i]
        candidates.append(Candidate(i, traj.times[i], scan.argmax, scan.max_value, growth))

    eps1 = eps0 if eps1 is None else eps1
    power = [r.zeeman_power for r in traj.reports]
    K_E = fit_work_constant(traj.times, power) if len(traj.times) > 1 else 0.0
    E = traj.E
    ledger = []
    prev_t = traj.times[0]
    acc = 0.0
    for n, c in enumerate(candidates, start=1):
        acc += math.sqrt(max(c.t - prev_t, 0.0))
        prev_t = c.t
        after = E[min(c.step + 1, len(E) - 1)]
        bound = 2 * E[0] - n * eps1 + K_E * acc
        ledger.append(LedgerRow(n, c.t, float(E[c.step - 1]), float(after), float(bound)))
    return SingularityReport(candidates, ledger, K_E, eps1)
