"""Ensemble self-test of the dyadic identities and the fitted inequality constants.

Every check draws a fresh seeded ensemble on the requested grid. Fields are
drawn on the lattice of the finest supported grid and truncated to the grid
at hand, so the ensembles on different grids are refinements of one another
and fitted constants can be compared across resolutions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .diagnostics import struwe_interpolation_check
from .fields import ElasticModel, SimState, SmoothCorrection
from .littlewood_paley import (
    besov_norm,
    bernstein_verify,
    bony_paraproducts,
    commutator_norm_check,
    decompose,
    dyadic_block,
    equivalence_constant,
    log_log_slope,
    negative_characterization_check,
    product_law_check,
    quasi_orthogonality_defect,
    sobolev_norm_hom,
)
from .spectral import Grid, SpectralField, leray_coeffs, random_field
from .uniqueness import (
    Perturbation,
    convection_commutator_check,
    elastic_log_estimate_check,
    precession_paraproduct_check,
)

BAND = 21  # dealiased band of a 64 grid
TREND_LIMIT = 0.05
IDENTITY_TOL = 1e-12
STRUWE_RADIUS = 1.0


@dataclass(frozen=True)
class CheckResult:
    name: str
    n: int
    trials: int
    value: float
    kind: str  # "identity" (value <= tol) or "constant" (finite, positive)
    tol: float = IDENTITY_TOL

    @property
    def passed(self):
        if not math.isfinite(self.value):
            return False
        if self.kind == "identity":
            return self.value <= self.tol
        return self.value > 0

    def row(self):
        return (self.name, self.n, self.trials, self.value, self.kind, self.tol, "PASS" if self.passed else "FAIL")


RESULT_COLUMNS = ("check", "n", "trials", "value", "kind", "tol", "status")


def _field(grid, rng, components=1, decay=2.0, kmin=1.0, kmax=None):
    return random_field(grid, rng, components, kmax=kmax, kmin=kmin, decay=decay, band=BAND)


def _ensemble(grid, seed, trials, **kw):
    rng = np.random.default_rng(seed)
    return [_field(grid, rng, **kw) for _ in range(trials)]


def _solenoidal(grid, rng, decay=2.0):
    f = _field(grid, rng, 2, decay=decay)
    return SpectralField(grid, leray_coeffs(f.coeffs, grid))


# ---------------------------------------------------------------------------
# identities


def _block_sum(f):
    blocks = list(decompose(f).values())
    total = blocks[0]
    for b in blocks[1:]:
        total = total + b
    return total


def partition_error(grid, seed, trials):
    k = grid.tables.kabs
    total = _block_sum(SpectralField(grid, np.ones((1,) + grid.shape, dtype=complex)))
    ones = np.where(k > 0, 1.0, 0.0)
    return float(np.max(np.abs(total.coeffs[0] - ones)))


def reconstruction_error(grid, seed, trials):
    worst = 0.0
    for f in _ensemble(grid, seed, trials, kmin=1.0):
        total = _block_sum(f)
        worst = max(worst, float(np.max(np.abs(total.coeffs - f.coeffs))))
    return worst


def support_error(grid, seed, trials):
    """Largest block coefficient outside the annulus ``[2^(q-1), (4/3) 2^q]``."""
    k = grid.tables.kabs
    worst = 0.0
    for f in _ensemble(grid, seed, min(trials, 10), kmin=1.0):
        for q, b in decompose(f).items():
            outside = (k < 2.0 ** (q - 1)) | (k > (4.0 / 3.0) * 2.0**q)
            worst = max(worst, float(np.max(np.abs(b.coeffs[:, outside]), initial=0.0)))
    return worst


def bony_error(grid, seed, trials):
    worst = 0.0
    for u, v in zip(_ensemble(grid, seed, min(trials, 5)), _ensemble(grid, seed + 1, min(trials, 5))):
        d = bony_paraproducts(u, v)
        worst = max(worst, float(np.max(np.abs(d.reconstruction.coeffs - d.product.coeffs))))
        for q, split in d.splits.items():
            ref = dyadic_block(d.product, q).coeffs
            worst = max(worst, float(np.max(np.abs(split.total.coeffs - ref))))
    return worst


def quasi_orthogonality(grid, seed, trials):
    worst = 0.0
    for u, v in zip(_ensemble(grid, seed, min(trials, 5)), _ensemble(grid, seed + 1, min(trials, 5))):
        worst = max(worst, *quasi_orthogonality_defect(u, v))
    return worst


def equivalence(s):
    def check(grid, seed, trials):
        return equivalence_constant(grid, s)

    return check


def equivalence_ensemble_ratio(grid, seed, trials, s=-0.5):
    """Largest ``besov(f, s, 2, 2) / hdot(f, s)`` over a random ensemble."""
    ens = _ensemble(grid, seed, trials, decay=1.0)
    return max(besov_norm(f, s, 2, 2) / sobolev_norm_hom(f, s) for f in ens)


# ---------------------------------------------------------------------------
# fitted constants


def _scale(grid):
    """Frequency scale tied to the grid, so localized checks probe every scale."""
    return grid.n // 8


def bernstein_ball_l2(grid, seed, trials):
    lam = _scale(grid)
    ens = _ensemble(grid, seed, trials, kmax=lam, decay=0.0)
    return bernstein_verify(ens, 1, 2, 2, lam).max


def bernstein_ball_sup(grid, seed, trials):
    lam = _scale(grid)
    ens = _ensemble(grid, seed, trials, kmax=lam, decay=0.0)
    return bernstein_verify(ens, 0, 2, math.inf, lam).max


def bernstein_annulus_upper(grid, seed, trials):
    lam = _scale(grid)
    ens = _ensemble(grid, seed, trials, kmin=0.75 * lam, kmax=(4.0 / 3.0) * lam, decay=0.0)
    return bernstein_verify(ens, 1, 4, 4, lam, support="annulus").max


def bernstein_annulus_lower_inverse(grid, seed, trials):
    """``1 / min`` of the annulus ratio, so that growth means a worse constant."""
    lam = _scale(grid)
    ens = _ensemble(grid, seed, trials, kmin=0.75 * lam, kmax=(4.0 / 3.0) * lam, decay=0.0)
    return 1.0 / bernstein_verify(ens, 1, 4, 4, lam, support="annulus").min


def commutator_constant(grid, seed, trials):
    q = int(round(math.log2(grid.n))) - 2
    rng = np.random.default_rng(seed)
    out = 0.0
    for _ in range(trials):
        u, v = _field(grid, rng), _field(grid, rng)
        out = max(out, commutator_norm_check(u, v, q, 2, math.inf, 2))
    return out


def product_law(s, t):
    def check(grid, seed, trials):
        rng = np.random.default_rng(seed)
        return max(product_law_check(_field(grid, rng), _field(grid, rng), s, t) for _ in range(trials))

    return check


def struwe_constant(grid, seed, trials):
    ens = _ensemble(grid, seed, trials, components=3, decay=2.0)
    return struwe_interpolation_check(ens, STRUWE_RADIUS).C1


def negative_characterization(grid, seed, trials):
    return max(negative_characterization_check(f, -0.5, 2, 2) for f in _ensemble(grid, seed, trials))


def convection_constant(grid, seed, trials):
    rng = np.random.default_rng(seed)
    return max(convection_commutator_check(_solenoidal(grid, rng), _field(grid, rng, 2)) for _ in range(trials))


def precession_constant(grid, seed, trials):
    """Fitted without absorption, which bounds the constant for every ``eps``."""
    rng = np.random.default_rng(seed)
    out = 0.0
    for _ in range(trials):
        M2 = _field(grid, rng, 3, decay=3.0)
        dM = _field(grid, rng, 3, decay=3.0)
        out = max(out, precession_paraproduct_check(M2, dM, eps=0.0).C)
    return out


def _random_state(grid, rng):
    u = _solenoidal(grid, rng, decay=3.0)
    F = _field(grid, rng, 4, decay=3.0)
    F.coeffs[0, 0, 0] += 1.0
    F.coeffs[3, 0, 0] += 1.0
    M = _field(grid, rng, 3, decay=3.0)
    return SimState(0.0, u, F, M)


ELASTIC = ElasticModel(1.0, SmoothCorrection(0.5, 1.0))


def elastic_log_constant(grid, seed, trials):
    rng = np.random.default_rng(seed)
    out = 0.0
    for i in range(trials):
        s1 = _random_state(grid, rng)
        eps = 10.0 ** -(1 + i % 3)
        s2 = Perturbation("u", eps, seed=seed + i).apply(s1)
        s2 = Perturbation("F", eps, seed=seed + i + 1).apply(s2)
        out = max(out, elastic_log_estimate_check(s1, s2, ELASTIC, eps=0.0).C)
    return out


IDENTITIES = {
    "lp_partition_of_unity": partition_error,
    "lp_block_reconstruction": reconstruction_error,
    "lp_block_support": support_error,
    "bony_reconstruction": bony_error,
    "bony_quasi_orthogonality": quasi_orthogonality,
}

CONSTANTS = {
    "besov_hdot_equivalence_s-0.5": equivalence(-0.5),
    "besov_hdot_equivalence_s0.5": equivalence(0.5),
    "besov_hdot_ensemble_ratio": equivalence_ensemble_ratio,
    "negative_lowpass_characterization": negative_characterization,
    "bernstein_ball_l2_grad": bernstein_ball_l2,
    "bernstein_ball_l2_to_sup": bernstein_ball_sup,
    "bernstein_annulus_upper": bernstein_annulus_upper,
    "bernstein_annulus_lower_inverse": bernstein_annulus_lower_inverse,
    "commutator": commutator_constant,
    "product_law_half_half": product_law(0.5, 0.5),
    "product_law_three_quarters_minus_quarter": product_law(0.75, -0.25),
    "struwe_interpolation": struwe_constant,
    "convection_commutator": convection_constant,
    "precession_paraproduct": precession_constant,
    "elastic_log_estimate": elastic_log_constant,
}

# the constants whose growth with resolution is tracked
TRENDED = (
    "bernstein_ball_l2_grad",
    "bernstein_ball_l2_to_sup",
    "bernstein_annulus_upper",
    "bernstein_annulus_lower_inverse",
    "commutator",
    "product_law_half_half",
    "product_law_three_quarters_minus_quarter",
    "struwe_interpolation",
    "convection_commutator",
    "precession_paraproduct",
    "elastic_log_estimate",
)


def run_selftest(n=32, trials=100, seed=0, names=None):
    grid = Grid(n)
    if n > 2 * BAND + 22:
        raise ValueError(f"grid size {n} exceeds the ensemble lattice; use n <= 64")
    out = []
    for name, fn in IDENTITIES.items():
        if names is None or name in names:
            out.append(CheckResult(name, n, trials, fn(grid, seed, trials), "identity"))
    for name, fn in CONSTANTS.items():
        if names is None or name in names:
            out.append(CheckResult(name, n, trials, float(fn(grid, seed, trials)), "constant"))
    return out


@dataclass(frozen=True)
class Trend:
    name: str
    sizes: tuple
    constants: tuple

    @property
    def slope(self):
        return log_log_slope(self.sizes, self.constants)

    @property
    def passed(self):
        return all(math.isfinite(c) and c > 0 for c in self.constants) and self.slope < TREND_LIMIT


def trend_report(sizes=(16, 32, 64), trials=100, seed=0, names=TRENDED):
    per_size = {n: {r.name: r.value for r in run_selftest(n, trials, seed, names=set(names))} for n in sizes}
    return [Trend(name, tuple(sizes), tuple(per_size[n][name] for n in sizes)) for name in names]


__all__ = [
    "CONSTANTS", "CheckResult", "IDENTITIES", "RESULT_COLUMNS", "TRENDED", "Trend",
    "run_selftest", "trend_report",
]
