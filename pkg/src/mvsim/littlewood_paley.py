"""Dyadic Littlewood-Paley blocks on the torus and estimate verifiers.

Blocks are radial Fourier multipliers ``phi(2**-q |k|)`` built from a smooth
cut-off ``chi``. On a grid of size ``n`` only ``q = 0 .. log2(n)`` can be
non-zero. Products of fields are evaluated on a grid refined by two, where
they are exact for inputs below the original Nyquist frequency.

Ensemble checks report fitted constants: the largest (and where relevant the
smallest) ratio observed, never an assumed bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InvalidExponents, MeanNotZero
from .spectral import AREA, Grid, SpectralField, random_field, resample, to_coeffs, to_values

# ---------------------------------------------------------------------------
# profile


def _smoothstep(x):
    x = np.asarray(x, dtype=float)
    out = np.where(x >= 1, 1.0, 0.0)
    inner = (x > 0) & (x < 1)
    xi = x[inner]
    with np.errstate(over="ignore"):
        out[inner] = 1.0 / (1.0 + np.exp(1.0 / xi - 1.0 / (1.0 - xi)))
    return out


@dataclass(frozen=True)
class DyadicProfile:
    """Radial cut-off ``chi``: 1 on ``[0, 1]``, smooth decay to 0 at ``outer``.

    ``phi(r) = chi(r) - chi(2r)`` is supported in ``[1/2, outer]``. With
    ``outer <= 4/3`` the low-high products ``S_{q-1}u * Delta_q v`` avoid every
    block ``Delta_j`` with ``|q - j| >= 5``.
    """

    outer: float = 4.0 / 3.0

    def __post_init__(self):
        if not 1.0 < self.outer <= 2.0:
            raise InvalidExponents("outer radius must lie in (1, 2]")

    def chi(self, r):
        return _smoothstep((self.outer - np.asarray(r, dtype=float)) / (self.outer - 1.0))

    def phi(self, r):
        r = np.asarray(r, dtype=float)
        return self.chi(r) - self.chi(2.0 * r)

    def block_weight(self, kabs, q):
        w = self.phi(np.asarray(kabs) * 2.0**-q)
        return np.where(np.asarray(kabs) == 0, 0.0, w)

    def low_weight(self, kabs, q):
        """Multiplier of ``S_q = sum_{j <= q-1} Delta_j``, i.e. ``chi(2**(1-q)|k|)``."""
        w = self.chi(np.asarray(kabs) * 2.0 ** (1 - q))
        return np.where(np.asarray(kabs) == 0, 0.0, w)


DEFAULT_PROFILE = DyadicProfile()


def q_range(grid):
    """Blocks that can be non-zero on ``grid``."""
    return range(0, int(round(math.log2(grid.n))) + 1)


@lru_cache(maxsize=64)
def _block_table(n, fraction, outer, q):
    grid = Grid(n, fraction)
    w = DyadicProfile(outer).block_weight(grid.tables.kabs, q)
    w.setflags(write=False)
    return w


@lru_cache(maxsize=64)
def _low_table(n, fraction, outer, q):
    grid = Grid(n, fraction)
    w = DyadicProfile(outer).low_weight(grid.tables.kabs, q)
    w.setflags(write=False)
    return w


def _bw(grid, q, profile):
    return _block_table(grid.n, grid.dealias_fraction, profile.outer, q)


def _lw(grid, q, profile):
    return _low_table(grid.n, grid.dealias_fraction, profile.outer, q)


def dyadic_block(f, q, profile=DEFAULT_PROFILE):
    return SpectralField(f.grid, f.coeffs * _bw(f.grid, q, profile))


def low_pass(f, q, profile=DEFAULT_PROFILE):
    return SpectralField(f.grid, f.coeffs * _lw(f.grid, q, profile))


def decompose(f, profile=DEFAULT_PROFILE):
    """All non-trivial blocks of ``f`` as a ``{q: block}`` mapping."""
    return {q: dyadic_block(f, q, profile) for q in q_range(f.grid)}


# ---------------------------------------------------------------------------
# norms


def lp_norm(f, p):
    """``L^p`` norm of the pointwise Euclidean magnitude.

    ``p = inf`` is the maximum over a grid refined by two, which contains the
    original nodes and tightens the band-limited maximum.
    """
    if p == math.inf:
        fine = resample(f, 2 * f.grid.n)
        v = to_values(fine.coeffs)
        return float(np.max(np.sqrt(np.sum(v * v, axis=0))))
    v = to_values(f.coeffs)
    mag = np.sqrt(np.sum(v * v, axis=0))
    return float((np.sum(mag**p) * f.grid.cell_area) ** (1.0 / p))


def _lr(values, r):
    values = np.asarray(values, dtype=float)
    if r == math.inf:
        return float(np.max(values)) if len(values) else 0.0
    return float(np.sum(values**r) ** (1.0 / r))


def besov_norm(f, s, p, r, profile=DEFAULT_PROFILE):
    """``l^r`` over ``q`` of ``2^{qs} |Delta_q f|_{L^p}``."""
    terms = [2.0 ** (q * s) * lp_norm(dyadic_block(f, q, profile), p) for q in q_range(f.grid)]
    return _lr(terms, r)


def _hdot_weight(grid, s):
    k = grid.tables.kabs
    with np.errstate(divide="ignore"):
        w = np.where(k > 0, k ** (2.0 * s), 0.0)
    return w


def sobolev_norm_hom(f, s):
    """``(sum_{k != 0} |k|^{2s} |f_k|^2)^{1/2}`` scaled so that ``s = 0`` is the L2 norm."""
    return math.sqrt(hdot_inner(f, f, s))


def hdot_inner(f, g, s):
    w = _hdot_weight(f.grid, s)
    return float(AREA * np.sum(w * np.real(f.coeffs * np.conj(g.coeffs))))


def lp_weight(grid, s, profile=DEFAULT_PROFILE):
    """Per-mode multiplier ``sum_q 2^{2qs} phi_q(|k|)^2`` of the dyadic inner product."""
    return sum(2.0 ** (2 * q * s) * _bw(grid, q, profile) ** 2 for q in q_range(grid))


def hdot_inner_lp(f, g, s, profile=DEFAULT_PROFILE):
    """``sum_q 2^{2qs} <Delta_q f, Delta_q g>_{L2}``."""
    w = lp_weight(f.grid, s, profile)
    return float(AREA * np.sum(w * np.real(f.coeffs * np.conj(g.coeffs))))


def equivalence_constant(grid, s, profile=DEFAULT_PROFILE):
    """Smallest ``c`` with ``besov(f,s,2,2)/hdot(f,s)`` in ``[1/c, c]`` for all ``f`` on ``grid``."""
    k = grid.tables.kabs
    mask = k > 0
    ratio = lp_weight(grid, s, profile)[mask] / k[mask] ** (2.0 * s)
    return float(math.sqrt(max(ratio.max(), 1.0 / ratio.min())))


# ---------------------------------------------------------------------------
# products on a refined grid


def refine(f):
    return resample(f, 2 * f.grid.n)


def _require_mean_free(*fields):
    for f in fields:
        if np.any(f.coeffs[:, 0, 0] != 0):
            raise MeanNotZero("field must have zero mean")


def _product(a, b):
    """Pointwise product (dot product over components) on ``a``'s grid."""
    va, vb = to_values(a.coeffs), to_values(b.coeffs)
    if va.shape[0] == vb.shape[0]:
        out = np.sum(va * vb, axis=0)[None]
    elif va.shape[0] == 1:
        out = va * vb
    elif vb.shape[0] == 1:
        out = va * vb
    else:
        raise InvalidExponents("component counts are incompatible for a product")
    return SpectralField(a.grid, to_coeffs(out))


def product(a, b):
    """Exact product of two fields, returned on the grid refined by two."""
    return _product(refine(a), refine(b))


@dataclass(frozen=True)
class BonySplit:
    """The pieces of one block ``Delta_q(uv)`` in the windowed decomposition."""

    commutator: SpectralField
    low_shift: SpectralField
    paraproduct: SpectralField
    high: SpectralField

    @property
    def total(self):
        return self.commutator + self.low_shift + self.paraproduct + self.high


@dataclass(frozen=True)
class BonyDecomposition:
    product: SpectralField
    low_high: SpectralField  # sum_q S_{q-1}u * Delta_q v
    high_low: SpectralField  # sum_q S_{q+2}v * Delta_q u
    splits: dict

    @property
    def reconstruction(self):
        return self.low_high + self.high_low


def bony_paraproducts(u, v, profile=DEFAULT_PROFILE, window=5):
    """Paraproduct pieces of ``u v`` and the four-term split of every block.

    For each ``q`` the split is ``sum_{|q-j|<=w} [Delta_q, S_{j-1}u] Delta_j v
    + sum_{|q-j|<=w} (S_{j-1}u - S_{q-1}u) Delta_q Delta_j v
    + S_{q-1}u Delta_q v + sum_{j>=q-w} Delta_q(S_{j+2}v Delta_j u)``.
    Everything lives on the grid refined by two.
    """
    _require_mean_free(u, v)
    uf, vf = refine(u), refine(v)
    grid = uf.grid
    qs = list(q_range(grid))
    blk = lambda f, q: dyadic_block(f, q, profile)  # noqa: E731
    low = lambda f, q: low_pass(f, q, profile)  # noqa: E731
    du = {j: blk(uf, j) for j in qs}
    dv = {j: blk(vf, j) for j in qs}
    su = {j: low(uf, j - 1) for j in range(qs[0] - window, qs[-1] + window + 2)}
    sv2 = {j: low(vf, j + 2) for j in qs}
    lh_terms = {j: _product(su[j], dv[j]) for j in qs}
    hl_terms = {j: _product(sv2[j], du[j]) for j in qs}
    low_high = sum(lh_terms.values(), SpectralField(grid, np.zeros_like(uf.coeffs[:1])))
    high_low = sum(hl_terms.values(), SpectralField(grid, np.zeros_like(uf.coeffs[:1])))
    zero = SpectralField(grid, np.zeros_like(low_high.coeffs))
    splits = {}
    for q in qs:
        win = [j for j in qs if abs(q - j) <= window]
        comm, shift = zero, zero
        for j in win:
            comm = comm + blk(lh_terms[j], q) - _product(su[j], blk(dv[j], q))
            shift = shift + _product(su[j] - su[q], blk(dv[j], q))
        para = _product(su[q], dv[q])
        high = zero
        for j in qs:
            if j >= q - window:
                high = high + blk(hl_terms[j], q)
        splits[q] = BonySplit(comm, shift, para, high)
    return BonyDecomposition(_product(uf, vf), low_high, high_low, splits)


def quasi_orthogonality_defect(u, v, profile=DEFAULT_PROFILE, gap=5):
    """Largest coefficient of ``Delta_j(S_{q-1}u Delta_q v)`` over ``|q-j| >= gap``.

    The second output is the analogue for ``Delta_j(S_{q+2}v Delta_q u)`` with
    ``j > q + gap``.
    """
    uf, vf = refine(u), refine(v)
    qs = list(q_range(uf.grid))
    worst_lh, worst_hl = 0.0, 0.0
    for q in qs:
        lh = _product(low_pass(uf, q - 1, profile), dyadic_block(vf, q, profile))
        hl = _product(low_pass(vf, q + 2, profile), dyadic_block(uf, q, profile))
        for j in qs:
            if abs(q - j) >= gap:
                worst_lh = max(worst_lh, float(np.max(np.abs(dyadic_block(lh, j, profile).coeffs))))
            if j > q + gap:
                worst_hl = max(worst_hl, float(np.max(np.abs(dyadic_block(hl, j, profile).coeffs))))
    return worst_lh, worst_hl


# ---------------------------------------------------------------------------
# ensembles


def spectral_ensemble(grid, rng, size, kmin, kmax, components=1, decay=0.0):
    """Random mean-free fields supported in ``kmin <= |k| <= kmax``."""
    kmin = max(kmin, 1.0)
    return [random_field(grid, rng, components, kmax=kmax, kmin=kmin, decay=decay) for _ in range(size)]


@dataclass(frozen=True)
class RatioStats:
    """Ratios observed over an ensemble; ``C = max`` is the fitted constant."""

    ratios: np.ndarray

    @property
    def max(self):
        return float(np.max(self.ratios)) if len(self.ratios) else 0.0

    @property
    def min(self):
        return float(np.min(self.ratios)) if len(self.ratios) else 0.0


def _ratio(num, den):
    if den == 0.0:
        return 0.0 if num == 0.0 else math.inf
    return num / den


def _check_exponent(p):
    if not (p == math.inf or p >= 1):
        raise InvalidExponents(f"exponent {p!r} must lie in [1, inf]")


def grad_power(f, k):
    """All ``k``-th partial derivatives stacked as components."""
    t = f.grid.tables
    c = f.coeffs
    for _ in range(k):
        c = np.concatenate([1j * t.d1 * c, 1j * t.d2 * c])
    return SpectralField(f.grid, c)


def bernstein_verify(ensemble, k, p, q, lam, support="ball"):
    """Ratios of the Bernstein inequalities for spectrally localized fields.

    ``support="ball"``: ``|grad^k u|_{L^q} / (lam^{k + 2(1/p - 1/q)} |u|_{L^p})``.
    ``support="annulus"``: ``|grad^k u|_{L^p} / (lam^k |u|_{L^p})``, whose
    minimum and maximum give the two-sided constants.
    """
    _check_exponent(p)
    _check_exponent(q)
    if p > q:
        raise InvalidExponents("need p <= q")
    inv = lambda e: 0.0 if e == math.inf else 1.0 / e  # noqa: E731
    out = []
    for u in ensemble:
        if support == "ball":
            out.append(_ratio(lp_norm(grad_power(u, k), q), lam ** (k + 2 * (inv(p) - inv(q))) * lp_norm(u, p)))
        elif support == "annulus":
            out.append(_ratio(lp_norm(grad_power(u, k), p), lam**k * lp_norm(u, p)))
        else:
            raise InvalidExponents(f"unknown support {support!r}")
    return RatioStats(np.array(out))


def _holder(p, r, h):
    inv = lambda e: 0.0 if e == math.inf else 1.0 / e  # noqa: E731
    for e in (p, r, h):
        _check_exponent(e)
    if not math.isclose(inv(p), inv(r) + inv(h), abs_tol=1e-12):
        raise InvalidExponents("need 1/p = 1/r + 1/h")


def commutator(u, v, q, profile=DEFAULT_PROFILE):
    """``[Delta_q, u] v = Delta_q(u v) - u Delta_q v`` on the refined grid."""
    uf, vf = refine(u), refine(v)
    return dyadic_block(_product(uf, vf), q, profile) - _product(uf, dyadic_block(vf, q, profile))


def commutator_norm_check(u, v, q, p, r, h, profile=DEFAULT_PROFILE):
    """``|[Delta_q,u]v|_{L^p} / (2^{-q} |grad u|_{L^r} |v|_{L^h})``."""
    _holder(p, r, h)
    _require_mean_free(u, v)
    num = lp_norm(commutator(u, v, q, profile), p)
    den = 2.0**-q * lp_norm(grad_power(u, 1), r) * lp_norm(v, h)
    return _ratio(num, den)


def product_law_check(a, b, s, t):
    """``|ab|_{H^{s+t-1}} / (|a|_{H^s} |b|_{H^t})`` with the seminorm on the left."""
    if not (abs(s) < 1 and abs(t) < 1 and s + t > 0):
        raise InvalidExponents("need |s| < 1, |t| < 1 and s + t > 0")
    ab = product(a, b)
    return _ratio(sobolev_norm_hom(ab, s + t - 1), sobolev_norm_hom(a, s) * sobolev_norm_hom(b, t))


def low_pass_besov_norm(f, s, p, r, profile=DEFAULT_PROFILE):
    """``l^r`` over all ``q`` of ``2^{qs} |S_q f|_{L^p}`` for ``s < 0``.

    ``S_q f`` vanishes for ``q <= 0`` and equals ``f - mean`` once ``q`` passes
    the top block; that geometric tail is summed in closed form.
    """
    if not s < 0:
        raise InvalidExponents("the low-pass characterization needs s < 0")
    top = q_range(f.grid)[-1] + 1
    terms = [2.0 ** (q * s) * lp_norm(low_pass(f, q, profile), p) for q in range(1, top + 1)]
    full = lp_norm(low_pass(f, top, profile), p)
    if r == math.inf:
        return _lr(terms, r)
    tail = full**r * 2.0 ** ((top + 1) * s * r) / (1.0 - 2.0 ** (s * r))
    return float((sum(x**r for x in terms) + tail) ** (1.0 / r))


def negative_characterization_check(f, s, p, r, profile=DEFAULT_PROFILE):
    """Ratio of the low-pass based norm to the block based norm (``s < 0``)."""
    return _ratio(low_pass_besov_norm(f, s, p, r, profile), besov_norm(f, s, p, r, profile))


def embedding_check(f, s, p1, p2, r1, r2, profile=DEFAULT_PROFILE):
    """``|f|_{B^{s - 2(1/p1 - 1/p2)}_{p2,r2}} / |f|_{B^s_{p1,r1}}``."""
    for e in (p1, p2, r1, r2):
        _check_exponent(e)
    if p1 > p2 or r1 > r2:
        raise InvalidExponents("need p1 <= p2 and r1 <= r2")
    inv = lambda e: 0.0 if e == math.inf else 1.0 / e  # noqa: E731
    shifted = s - 2.0 * (inv(p1) - inv(p2))
    return _ratio(besov_norm(f, shifted, p2, r2, profile), besov_norm(f, s, p1, r1, profile))


def log_log_slope(sizes, values):
    """Least-squares slope of ``log(values)`` against ``log(sizes)``."""
    x = np.log(np.asarray(sizes, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    return float(np.polyfit(x, y, 1)[0])
