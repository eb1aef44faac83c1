import math

import numpy as np
import pytest

from mvsim.diagnostics import (
    Trajectory,
    blowup_indicator,
    cumulative,
    cutoff,
    energy_identity_residual,
    energy_inequality_residual,
    energy_report,
    envelope_fit,
    fit_work_constant,
    forcing_constant,
    gradF_budget,
    gradF_check,
    local_energy,
    local_energy_inequality_residual,
    local_energy_scan,
    magnetization_dissipation,
    singularity_scan,
    small_energy_bound_check,
    state_norms,
    struwe_interpolation_check,
    struwe_ratio,
)
from mvsim.dynamics import StepperConfig, step, with_pressure
from mvsim.errors import InvalidArgument, InvalidRadius
from mvsim.fields import AnisotropyModel, ExternalField, FieldMode, ModelParams, SimState, zero_state
from mvsim.initial import build_state, magnetization
from mvsim.selftest import run_selftest
from mvsim.spectral import AREA, Grid, SpectralField, forward_transform


def smooth_state(n=32, seed=0, u_amp=0.3, F_amp=0.3, M_amp=0.15):
    return build_state(
        Grid(n),
        u=("random", dict(amp=u_amp, seed=seed, kmax=3)),
        F=("random", dict(amp=F_amp, seed=seed, kmax=3, base=1.0)),
        M=("random", dict(amp=M_amp, seed=seed, kmax=1.5)),
    )


def trajectory(state, params, dt, n_steps, **kw):
    traj = Trajectory(params, **kw)
    traj.record(state)
    cfg = StepperConfig(dt)
    for i in range(n_steps):
        state = step(state, cfg, params, step_index=i)
        traj.record(state)
    return traj


def shear(grid):
    _, x2 = grid.coordinates()
    u = forward_transform(np.stack([np.sin(x2), np.zeros_like(x2)]), grid)
    return zero_state(grid).replace(u=u)


def padded_values(coeffs, N):
    """Values of a band-limited field on an ``N x N`` grid by zero padding."""
    n = coeffs.shape[-1]
    out = np.zeros(coeffs.shape[:-2] + (N, N), dtype=complex)
    k = np.fft.fftfreq(n, 1.0 / n).astype(int)
    for a in k:
        for b in k:
            out[..., a % N, b % N] = coeffs[..., a % n, b % n]
    return out


# ---------------------------------------------------------------------------
# energy report


def test_energy_report_zero_state(grid16):
    r = energy_report(zero_state(grid16), ModelParams(aniso=AnisotropyModel(1.0)))
    for name in ("kinetic", "elastic", "exchange", "aniso", "zeeman", "diss_u", "diss_F", "diss_M", "E_total"):
        assert getattr(r, name) == 0.0


def test_kinetic_energy_of_one_mode(grid16):
    r = energy_report(shear(grid16), ModelParams())
    assert r.kinetic == pytest.approx(math.pi**2, rel=1e-14)
    assert r.diss_u == pytest.approx(2 * math.pi**2, rel=1e-14)


def test_energy_report_matches_fine_quadrature():
    s = smooth_state(32, seed=1)
    mu0, alpha, H = 0.5, 0.5, np.array([0.1, 0.0, 0.2])
    params = ModelParams(mu0=mu0, aniso=AnisotropyModel(alpha), hext=ExternalField(constant=tuple(H)))
    r = energy_report(s, params)

    N = 96
    k = np.fft.fftfreq(N, 1.0 / N)
    K1, K2 = np.meshgrid(k, k, indexing="ij")
    vals = lambda c: np.real(np.fft.ifft2(c) * N * N)  # noqa: E731
    cell = (2 * np.pi / N) ** 2
    uc, Fc, Mc = (padded_values(f.coeffs, N) for f in (s.u, s.F, s.M))
    u, F, M = vals(uc), vals(Fc), vals(Mc)
    gu = [vals(1j * K1 * uc), vals(1j * K2 * uc)]
    gM = [vals(1j * K1 * Mc), vals(1j * K2 * Mc)]
    lapM = vals(-(K1**2 + K2**2) * Mc)
    heff = lapM + mu0 * H[:, None, None] - alpha * np.stack([M[0], M[1], 0 * M[2]])
    mh = np.sum(M * heff, axis=0)

    assert r.kinetic == pytest.approx(0.5 * np.sum(u * u) * cell, rel=1e-8)
    assert r.elastic == pytest.approx(0.5 * np.sum(F * F) * cell, rel=1e-8)
    assert r.exchange == pytest.approx(0.5 * np.sum(gM[0] ** 2 + gM[1] ** 2) * cell, rel=1e-8)
    assert r.aniso == pytest.approx(0.5 * alpha * np.sum(M[0] ** 2 + M[1] ** 2) * cell, rel=1e-8)
    assert r.zeeman == pytest.approx(-mu0 * np.sum(M * H[:, None, None]) * cell, rel=1e-8)
    assert r.diss_u == pytest.approx(np.sum(gu[0] ** 2 + gu[1] ** 2) * cell, rel=1e-8)
    assert r.diss_M == pytest.approx(np.sum(np.sum(heff**2, axis=0) - mh**2) * cell, rel=1e-8)
    assert r.E_total == pytest.approx(r.kinetic + r.elastic + r.exchange + r.aniso, rel=1e-15)


def test_dissipation_rates_nonnegative():
    for seed in range(3):
        s = smooth_state(32, seed=seed, u_amp=1.0, F_amp=1.0)
        r = energy_report(s, ModelParams())
        assert r.diss_u >= 0 and r.diss_F >= 0 and r.diss_M >= -1e-12
        # quadratic W: the deformation dissipation is kappa chi |grad F|^2
        assert r.diss_F == pytest.approx(state_norms(s).grad_F, rel=1e-12)


def test_forcing_constant_cases():
    assert forcing_constant(ModelParams()) == 0.0
    assert forcing_constant(ModelParams(mu0=1.0, hext=ExternalField(constant=(0.0, 0.0, 1.0)))) == 2.0
    omega, amp, T, mu0 = 3.0, 0.4, 1.0, 0.7
    hext = ExternalField(modes=(FieldMode((1, 0), (0.0, 0.0, amp), omega=omega),))
    params = ModelParams(mu0=mu0, hext=hext, T=T)
    # amp cos(x1) cos(omega t): sups amp and amp*omega, the second at t = pi/6 < T
    assert forcing_constant(params) == pytest.approx(2 * mu0 * (amp + T * amp * omega), rel=1e-3)


# ---------------------------------------------------------------------------
# global energy inequality


def test_equilibrium_residual_is_minus_K(grid16):
    s = zero_state(grid16)
    traj = trajectory(s, ModelParams(), 1e-3, 5)
    assert np.all(energy_inequality_residual(traj.reports, ModelParams()).residual == 0.0)

    params = ModelParams(mu0=1.0, hext=ExternalField(constant=(0.0, 0.0, 1.0)))
    traj = trajectory(s, params, 1e-3, 5)
    series = energy_inequality_residual(traj.reports, params)
    assert series.K == 2.0
    assert np.allclose(series.residual, -2.0, atol=1e-14)
    assert series.passed


def test_navier_stokes_only_run_dissipates():
    g = Grid(32)
    s = build_state(g, u=("random", dict(amp=1.0, seed=3, kmax=4)))
    params = ModelParams(nu=0.1)
    traj = trajectory(s, params, 2e-3, 40)
    series = energy_inequality_residual(traj.reports, params)
    # trapezoid quadrature of the decaying dissipation overshoots by O(dt^2)
    assert series.passed
    assert series.max_residual < 1e-6 * series.E0
    assert np.all(np.diff(traj.E) <= 0)


def _under_resolved_run(dealias):
    g = Grid(32, dealias)
    s = build_state(
        g,
        u=("random", dict(amp=2.0, seed=0, kmax=15)),
        F=("random", dict(amp=1.0, seed=0, kmax=15, base=1.0)),
        M=("random", dict(amp=0.2, seed=0, kmax=2)),
    )
    params = ModelParams(nu=0.01, kappa=0.01)
    return energy_inequality_residual(trajectory(s, params, 2e-3, 50).reports, params)


def test_missing_dealiasing_breaks_the_energy_inequality():
    assert _under_resolved_run(2.0 / 3.0).passed
    broken = _under_resolved_run(1.0)
    assert not broken.passed
    assert broken.max_residual > 1e3 * broken.slack


def test_energy_identity_closes_with_forcing():
    s = smooth_state(32, seed=2)
    hext = ExternalField(constant=(0.1, 0.0, 0.0), modes=(FieldMode((1, 0), (0.0, 0.2, 0.0), omega=2.0),))
    params = ModelParams(mu0=0.8, hext=hext)
    traj = trajectory(s, params, 1e-3, 50)
    _, res = energy_identity_residual(traj.reports)
    scale = 1 + 2 * traj.E[0]
    assert np.max(np.abs(res)) < 1e-4 * scale
    assert energy_inequality_residual(traj.reports, params).passed


# ---------------------------------------------------------------------------
# deformation budget and blow-up indicator


def test_gradF_budget():
    assert gradF_budget(0.0, 1.0) == 0.0
    assert gradF_budget(0.5, 2.0) == pytest.approx(math.e, rel=1e-15)
    with pytest.raises(InvalidArgument):
        gradF_budget(1.0, 0.0)


def test_gradF_check_cases():
    g = Grid(16)
    s = zero_state(g).replace(u=shear(g).u)
    params = ModelParams()
    traj = trajectory(s, params, 1e-3, 10)
    check = gradF_check(traj.times, traj.norms)
    assert np.all(check.lhs == 0) and check.C_fit == 0.0 and check.passed

    s = build_state(
        Grid(32),
        u=("random", dict(amp=1.0, seed=4, kmax=3)),
        F=("random", dict(amp=0.5, seed=4, kmax=3)),
        M=("random", dict(amp=0.15, seed=4, kmax=1.5)),
    )
    traj = trajectory(s, ModelParams(nu=0.05, kappa=0.05), 2e-3, 150)
    check = gradF_check(traj.times, traj.norms)
    assert check.passed and check.C_fit > 0
    assert np.all(check.lhs <= check.rhs() * (1 + 1e-12))
    assert np.any(check.lhs > check.rhs(0.99 * check.C_fit))


def test_blowup_indicator_cases(grid16):
    assert blowup_indicator(zero_state(grid16)) == (0.0, 1.0)
    Q, B = blowup_indicator(shear(grid16))
    assert Q == pytest.approx(2 * math.pi**2, rel=1e-14)
    assert B == pytest.approx((1 + 2 * math.pi**2) ** 3, rel=1e-14)


def test_envelope_fit_bounds_growth():
    traj = trajectory(smooth_state(32, seed=5, u_amp=1.0), ModelParams(nu=0.05, kappa=0.05), 1e-3, 30)
    C = envelope_fit(traj.times, traj.Q, traj.B)
    dQ = np.diff(traj.Q) / np.diff(traj.times)
    Bm = 0.5 * (traj.B[1:] + traj.B[:-1])
    assert np.all(dQ <= C * Bm * (1 + 1e-12))
    assert envelope_fit([0.0, 1.0], [2.0, 1.0], [1.0, 1.0]) == 0.0


# ---------------------------------------------------------------------------
# local energies


def test_local_energy_of_constant_field(grid16):
    M = zero_state(grid16).M
    assert local_energy(M, (1.0, 1.0), 0.5) == 0.0
    assert np.all(local_energy_scan(M, 0.5).values == 0.0)


def test_local_energy_area_scaling():
    g = Grid(64)
    x1, _ = g.coordinates()
    M = forward_transform(np.stack([np.cos(x1), np.sin(x1), np.zeros_like(x1)]), g)
    R = 0.7
    assert local_energy(M, (1.0, 2.0), R) == pytest.approx(math.pi * R**2, rel=2e-3)


def bubble(grid, center, radius=0.6):
    return SpectralField(grid, magnetization(grid, "bubble", radius=radius, winding=1, center=center))


def test_scan_finds_a_bump_within_one_stride():
    g = Grid(32)
    center = (2.0, 4.0)
    stride = 2
    scan = local_energy_scan(bubble(g, center), 0.5, stride)
    assert np.all(scan.values >= 0)
    assert scan.max_value >= np.mean(scan.values)
    dx = [abs((a - b + math.pi) % (2 * math.pi) - math.pi) for a, b in zip(scan.argmax, center)]
    assert max(dx) <= stride * g.h


def test_large_ball_recovers_total_exchange():
    g = Grid(64)
    M = bubble(g, (2.0, 4.0))
    total = float(AREA * np.sum(g.tables.dsq * np.abs(M.coeffs) ** 2))
    assert local_energy(M, (2.0, 4.0), 3.0) == pytest.approx(total, rel=1e-3)


def test_invalid_radius(grid16):
    M = zero_state(grid16).M
    for R in (0.0, -1.0, math.pi, 4.0):
        with pytest.raises(InvalidRadius):
            local_energy(M, (0.0, 0.0), R)
    with pytest.raises(InvalidRadius):
        local_energy_scan(M, math.pi)
    with pytest.raises(InvalidRadius):
        cutoff(grid16, (0.0, 0.0), 1.6)


def test_struwe_ratio_degenerate_and_constant():
    g = Grid(32)
    assert struwe_ratio(SpectralField(g, np.zeros((3, 32, 32), dtype=complex)), 1.0) == 0.0
    one = forward_transform(np.ones((1, 32, 32)), g)
    # int 1 = A; local ball mass pi R^2; R^-2 int 1 = A/R^2, so the ratio is 1/pi
    for R in (0.5, 1.0):
        assert struwe_ratio(one, R) == pytest.approx(1 / math.pi, rel=1e-2)
    res = struwe_interpolation_check([one, one * 2.0], 1.0)
    assert res.C1 == pytest.approx(1 / math.pi, rel=1e-2)
    assert res.eps1 == pytest.approx(1 / (4 * res.C1))


# ---------------------------------------------------------------------------
# small-energy bound


def fitted_eps1():
    (res,) = run_selftest(32, 100, 0, names={"struwe_interpolation"})
    return 1.0 / (4.0 * res.value)


def test_small_energy_bound_cases():
    eps1 = fitted_eps1()
    g = Grid(32)
    params = ModelParams()

    traj = trajectory(zero_state(g), params, 1e-3, 5, scan_radius=0.5)
    rep = small_energy_bound_check(traj, 0.5, eps1)
    assert rep.applicable and rep.lhs == 0.0 and rep.passed

    s = build_state(g, u=("random", dict(amp=0.1, seed=1, kmax=3)), M=("random", dict(amp=0.05, seed=1, kmax=1.5)))
    traj = trajectory(s, params, 1e-3, 20, scan_radius=0.5)
    rep = small_energy_bound_check(traj, 0.5, eps1, C_ref=1.0)
    assert rep.applicable and rep.sup_local < eps1
    assert rep.passed and rep.margin > 0

    s = zero_state(g).replace(M=bubble(g, (2.0, 4.0)))
    traj = trajectory(s, params, 1e-4, 2, scan_radius=0.5)
    rep = small_energy_bound_check(traj, 0.5, eps1)
    assert not rep.applicable and "precondition" in rep.reason and rep.passed

    with pytest.raises(InvalidArgument):
        small_energy_bound_check(trajectory(zero_state(g), params, 1e-3, 1), 0.5, eps1)


# ---------------------------------------------------------------------------
# magnetization damping identity


def test_damping_expansion_matches_direct_evaluation(rng):
    for _ in range(20):
        M = rng.standard_normal((3, 50))
        M /= np.linalg.norm(M, axis=0)
        # Lap M on a unit field has normal part -|grad M|^2 M
        A = rng.standard_normal((3, 50))
        A -= (np.sum(A * M, axis=0) + rng.uniform(0, 3, 50)) * M
        H, P = rng.standard_normal((3, 50)), rng.standard_normal((3, 50))
        direct, expanded = magnetization_dissipation(M, A, H, P, mu0=rng.uniform(0, 2))
        assert np.max(np.abs(direct - expanded)) < 1e-10 * (1 + np.max(np.abs(direct)))


# ---------------------------------------------------------------------------
# local energy inequality


def test_local_inequality_zero_state(grid16):
    res = local_energy_inequality_residual([zero_state(grid16), zero_state(grid16, t=0.1)], ModelParams())
    assert np.all(res.residual == 0.0) and res.C_fit == 0.0 and res.passed


def test_global_cutoff_reduces_to_energy_balance():
    params = ModelParams()
    traj = trajectory(smooth_state(32, seed=6), params, 1e-3, 20, keep_states=True)
    res = local_energy_inequality_residual(traj.states, params, global_cutoff=True)
    for key in ("flux_u", "flux_F", "flux_gradM", "flux_p", "shape_u", "shape_F", "shape_gradM"):
        assert np.all(res.terms[key] == 0.0)
    times = np.array(traj.times)
    E = traj.E
    diss = np.array([r.diss_u + r.diss_F + r.diss_M for r in traj.reports])
    expected = 2 * E + cumulative(times, diss)
    assert np.max(np.abs(res.left - expected)) < 1e-8 * (1 + 2 * E[0])


def test_local_inequality_along_a_run():
    params = ModelParams()
    traj = trajectory(smooth_state(32, seed=7, u_amp=0.5), params, 1e-3, 30, keep_states=True)
    res = local_energy_inequality_residual(traj.states, params, x0=(1.0, 2.0), R=0.6)
    assert math.isfinite(res.C_fit)
    assert res.passed
    assert np.all(res.residual <= res.slack)
    tight = local_energy_inequality_residual(traj.states, params, x0=(1.0, 2.0), R=0.6, C=0.5 * res.C_fit)
    assert res.C_fit == 0 or not tight.passed


# ---------------------------------------------------------------------------
# singular times


def test_scan_is_empty_on_small_data():
    params = ModelParams()
    s = build_state(Grid(32), u=("random", dict(amp=0.1, seed=2, kmax=3)), M=("random", dict(amp=0.05, seed=2, kmax=1.5)))
    traj = trajectory(s, params, 1e-3, 20, scan_radius=0.5)
    assert singularity_scan(traj, eps0=fitted_eps1()).candidates == []


def test_injected_concentration_gives_one_candidate():
    g = Grid(32)
    params = ModelParams()
    center = (2.0, 4.0)
    traj = Trajectory(params, scan_radius=0.5, scan_stride=2)
    calm = zero_state(g)
    for i in range(10):
        s = calm.replace(t=0.01 * i)
        if i == 6:
            s = s.replace(M=bubble(g, center))
        traj.record(s)
    report = singularity_scan(traj, eps0=fitted_eps1(), R=0.5)
    assert len(report.candidates) == 1
    c = report.candidates[0]
    assert c.step == 6 and c.t == pytest.approx(0.06)
    dx = [abs((a - b + math.pi) % (2 * math.pi) - math.pi) for a, b in zip(c.center, center)]
    assert max(dx) <= 2 * g.h
    assert len(report.ledger) == 1 and report.ledger[0].index == 1
    with pytest.raises(InvalidArgument):
        singularity_scan(traj, eps0=1.0, R=0.7)


def test_work_constant_fit():
    t = np.linspace(0.0, 1.0, 11)
    assert fit_work_constant(t, np.zeros(11)) == 0.0
    # constant power P: 2P(b - a) / sqrt(b - a) peaks at the full span
    assert fit_work_constant(t, np.full(11, 3.0)) == pytest.approx(6.0, rel=1e-14)


def test_trajectory_keeps_pressure():
    params = ModelParams()
    traj = trajectory(smooth_state(16, seed=1), params, 1e-3, 2, keep_states=True)
    assert all(s.p is not None for s in traj.states)
    ref = with_pressure(traj.states[-1].replace(p=None), params)
    assert np.array_equal(ref.p.coeffs, traj.states[-1].p.coeffs)
    assert isinstance(traj.states[0], SimState)
