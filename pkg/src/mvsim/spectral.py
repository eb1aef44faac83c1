"""Periodic grid, Fourier transforms and spectral differential operators.

Normalization
-------------
All modules share one convention. For a field sampled at the points
``x = 2*pi*(i, j)/n`` of the torus ``[0, 2*pi)^2`` the coefficients are::

    coeffs[k] = fft2(values)[k] / n**2

so ``coeffs[k]`` is the average of ``f * exp(-i k.x)`` over the torus, the
mean of ``f`` is ``coeffs[0, 0]`` and ``cos(x1)`` has coefficient ``1/2`` at
``k = (+-1, 0)``. Parseval then reads::

    integral |f|^2 dx = (2*pi)**2 * sum_k |coeffs[k]|^2

Array layout is ``(components, n, n)``; axis 1 runs along ``x1`` and axis 2
along ``x2``. Tensor fields store ``A[i, j]`` at component ``2*i + j``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft

from .errors import InvalidField, MeanNotZero, NotRealField

TWO_PI = 2.0 * np.pi
AREA = TWO_PI**2
IMAG_TOL = 1e-10


def fft_workers():
    """Worker count for FFTs, capped by the ``MVSIM_THREADS`` variable."""
    raw = os.environ.get("MVSIM_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass(frozen=True)
class Grid:
    """Uniform ``n x n`` grid on the torus with a dealiasing rule.

    Parameters
    ----------
    n : int
        Points (and Fourier modes) per axis; a power of two, at least 8.
    dealias_fraction : float
        Modes with ``max(|k1|, |k2|) > dealias_fraction * n / 2`` are removed
        by :func:`dealias`. The default is the 2/3 rule.
    """

    n: int
    dealias_fraction: float = 2.0 / 3.0

    def __post_init__(self):
        n = self.n
        if not isinstance(n, (int, np.integer)) or n < 8 or n & (n - 1):
            raise InvalidField(f"grid size must be a power of two >= 8, got {n!r}")
        if not 0.0 < float(self.dealias_fraction) <= 1.0:
            raise InvalidField("dealias_fraction must lie in (0, 1]")
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "dealias_fraction", float(self.dealias_fraction))

    @property
    def h(self):
        return TWO_PI / self.n

    @property
    def shape(self):
        return (self.n, self.n)

    @property
    def cell_area(self):
        return self.h**2

    @property
    def tables(self):
        return _tables(self.n, self.dealias_fraction)

    def coordinates(self):
        """Physical coordinates ``(x1, x2)`` as two ``n x n`` arrays."""
        x = np.arange(self.n) * self.h
        return np.meshgrid(x, x, indexing="ij")

    def refined(self, factor=2):
        return Grid(self.n * factor, self.dealias_fraction)


@dataclass(frozen=True)
class _Tables:
    k1: np.ndarray  # integer wavenumbers, Nyquist included
    k2: np.ndarray
    kabs: np.ndarray  # |k| from the integer lattice
    d1: np.ndarray  # derivative wavenumbers, Nyquist zeroed
    d2: np.ndarray
    dsq: np.ndarray  # d1^2 + d2^2
    inv_dsq: np.ndarray  # 1/dsq where dsq > 0, else 0
    keep: np.ndarray  # dealias mask


@lru_cache(maxsize=32)
def _tables(n, fraction):
    k = np.fft.fftfreq(n, 1.0 / n)
    k1, k2 = np.meshgrid(k, k, indexing="ij")
    d = k.copy()
    d[n // 2] = 0.0
    d1, d2 = np.meshgrid(d, d, indexing="ij")
    dsq = d1**2 + d2**2
    inv = np.zeros_like(dsq)
    np.divide(1.0, dsq, out=inv, where=dsq > 0)
    cut = fraction * n / 2.0
    keep = np.maximum(np.abs(k1), np.abs(k2)) <= cut + 1e-12
    tabs = _Tables(k1, k2, np.hypot(k1, k2), d1, d2, dsq, inv, keep)
    for arr in (tabs.k1, tabs.k2, tabs.kabs, tabs.d1, tabs.d2, tabs.dsq, tabs.inv_dsq, tabs.keep):
        arr.setflags(write=False)
    return tabs


class SpectralField:
    """Fourier coefficients of a real field with ``c`` components.

    ``coeffs`` has shape ``(c, n, n)`` and follows the module normalization.
    Instances are treated as immutable values; arithmetic returns new fields.
    """

    __slots__ = ("grid", "coeffs")

    def __init__(self, grid, coeffs):
        coeffs = np.asarray(coeffs, dtype=np.complex128)
        if coeffs.ndim == 2:
            coeffs = coeffs[None]
        if coeffs.ndim != 3 or coeffs.shape[1:] != grid.shape:
            raise InvalidField(
                f"coefficient shape {coeffs.shape} does not match grid {grid.shape}"
            )
        self.grid = grid
        self.coeffs = coeffs

    @property
    def components(self):
        return self.coeffs.shape[0]

    @property
    def mean(self):
        """Component means (the ``k = 0`` coefficients, real part)."""
        return self.coeffs[:, 0, 0].real.copy()

    def values(self):
        return inverse_transform(self)

    def component(self, i):
        return SpectralField(self.grid, self.coeffs[i : i + 1].copy())

    def copy(self):
        return SpectralField(self.grid, self.coeffs.copy())

    def _coerce(self, other):
        if isinstance(other, SpectralField):
            if other.grid != self.grid:
                raise InvalidField("fields live on different grids")
            return other.coeffs
        return other

    def __add__(self, other):
        return SpectralField(self.grid, self.coeffs + self._coerce(other))

    def __sub__(self, other):
        return SpectralField(self.grid, self.coeffs - self._coerce(other))

    def __neg__(self):
        return SpectralField(self.grid, -self.coeffs)

    def __mul__(self, scalar):
        if isinstance(scalar, SpectralField):
            raise TypeError("use a physical-space product for field * field")
        return SpectralField(self.grid, self.coeffs * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return SpectralField(self.grid, self.coeffs / scalar)

    def __repr__(self):
        return f"SpectralField(n={self.grid.n}, components={self.components})"


def zeros(grid, components):
    return SpectralField(grid, np.zeros((components,) + grid.shape, dtype=np.complex128))


# ---------------------------------------------------------------------------
# raw coefficient helpers used by the hot paths


def to_coeffs(values):
    n = values.shape[-1]
    return scipy.fft.fft2(values, axes=(-2, -1), workers=fft_workers()) / (n * n)


def to_values(coeffs):
    n = coeffs.shape[-1]
    return scipy.fft.ifft2(coeffs * (n * n), axes=(-2, -1), workers=fft_workers()).real


def _checked_values(coeffs):
    n = coeffs.shape[-1]
    z = scipy.fft.ifft2(coeffs * (n * n), axes=(-2, -1), workers=fft_workers())
    scale = max(1.0, float(np.max(np.abs(z.real), initial=0.0)))
    residue = float(np.max(np.abs(z.imag), initial=0.0))
    if residue > IMAG_TOL * scale:
        raise NotRealField(f"imaginary residue {residue:.3e} exceeds tolerance")
    return z.real


# ---------------------------------------------------------------------------
# transforms


def forward_transform(values, grid=None):
    """Transform real samples of shape ``(c, n, n)`` or ``(n, n)``."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 2:
        values = values[None]
    if values.ndim != 3 or values.shape[1] != values.shape[2]:
        raise InvalidField(f"expected samples of shape (c, n, n), got {values.shape}")
    if grid is None:
        grid = Grid(values.shape[-1])
    elif values.shape[1:] != grid.shape:
        raise InvalidField(f"samples {values.shape[1:]} do not match grid {grid.shape}")
    if not np.all(np.isfinite(values)):
        raise InvalidField("samples contain non-finite values")
    return SpectralField(grid, to_coeffs(values))


def inverse_transform(f):
    """Real samples of ``f``; raises :class:`NotRealField` if not Hermitian."""
    return _checked_values(f.coeffs)


# ---------------------------------------------------------------------------
# differential operators


def _deriv(coeffs, grid):
    t = grid.tables
    return np.stack([1j * t.d1 * coeffs, 1j * t.d2 * coeffs], axis=1)


def gradient(f):
    """Gradient; a ``c``-component input yields ``2c`` components ``d_j f_i``."""
    g = _deriv(f.coeffs, f.grid)
    return SpectralField(f.grid, g.reshape((-1,) + f.grid.shape))


def laplacian(f):
    return SpectralField(f.grid, -f.grid.tables.dsq * f.coeffs)


def divergence(v):
    """Divergence of a vector field, or row-wise divergence of a tensor."""
    t = v.grid.tables
    c = v.components
    if c % 2:
        raise InvalidField("divergence needs a vector or 2x2 tensor field")
    rows = v.coeffs.reshape((c // 2, 2) + v.grid.shape)
    out = 1j * t.d1 * rows[:, 0] + 1j * t.d2 * rows[:, 1]
    return SpectralField(v.grid, out)


def transpose(a):
    """Transpose of a 2x2 tensor field."""
    return SpectralField(a.grid, a.coeffs[[0, 2, 1, 3]])


def _require_mean_free(f):
    if np.any(f.coeffs[:, 0, 0] != 0):
        raise MeanNotZero("argument must have an exactly zero k=0 coefficient")


def inverse_laplacian(f):
    _require_mean_free(f)
    return SpectralField(f.grid, -f.grid.tables.inv_dsq * f.coeffs)


def inverse_sqrt_laplacian(f):
    _require_mean_free(f)
    return SpectralField(f.grid, np.sqrt(f.grid.tables.inv_dsq) * f.coeffs)


def leray_coeffs(c, grid):
    t = grid.tables
    dot = (t.d1 * c[0] + t.d2 * c[1]) * t.inv_dsq
    return np.stack([c[0] - t.d1 * dot, c[1] - t.d2 * dot])


def leray_project(v):
    """Project a 2-vector field onto divergence-free fields; the mean is kept."""
    if v.components != 2:
        raise InvalidField("leray_project expects a 2-component field")
    return SpectralField(v.grid, leray_coeffs(v.coeffs, v.grid))


def dealias(f):
    return SpectralField(f.grid, f.coeffs * f.grid.tables.keep)


# ---------------------------------------------------------------------------
# resampling and quadrature


def resample(f, n_new):
    """Trigonometric interpolation of ``f`` onto an ``n_new`` grid.

    Upsampling is exact. Downsampling drops modes outside the coarse band
    and the Nyquist line of the target grid.
    """
    n = f.grid.n
    grid = Grid(n_new, f.grid.dealias_fraction)
    m = min(n, n_new) // 2
    out = np.zeros((f.components, n_new, n_new), dtype=np.complex128)
    idx_src = np.r_[0:m, n - m + 1 : n]
    idx_dst = np.r_[0:m, n_new - m + 1 : n_new]
    out[:, idx_dst[:, None], idx_dst[None, :]] = f.coeffs[:, idx_src[:, None], idx_src[None, :]]
    return SpectralField(grid, out)


def integrate(values, grid):
    """Rectangle-rule integral of samples over the torus (spectrally exact)."""
    return float(np.sum(values) * grid.cell_area)


def l2_norm_sq(f):
    return float(AREA * np.sum(np.abs(f.coeffs) ** 2))


def inner(f, g):
    """Real L2 inner product of two fields with matching components."""
    return float(AREA * np.sum((f.coeffs * np.conj(g.coeffs)).real))


def multiply(a, b):
    """Dealiased pointwise product of two scalar fields."""
    prod = to_values(a.coeffs) * to_values(b.coeffs)
    return dealias(SpectralField(a.grid, to_coeffs(prod)))


def random_field(grid, rng, components=1, kmax=None, decay=2.0, kmin=0.0, band=None):
    """Random real band-limited field, consistent across grid sizes.

    Coefficients are drawn on a fixed lattice ``|k_i| <= band`` (default: the
    dealiased band of ``grid``) with amplitude ``(1 + |k|)**-decay``, then
    restricted to ``kmin <= |k| <= kmax``. Drawing with a larger ``band`` and
    the same seed on a coarser grid gives the truncation of the finer field.
    """
    n = grid.n
    cut = int(np.floor(grid.dealias_fraction * n / 2 + 1e-12))
    band = cut if band is None else int(band)
    kk = np.arange(-band, band + 1)
    b1, b2 = np.meshgrid(kk, kk, indexing="ij")
    mag = np.hypot(b1, b2)
    shape = (components,) + b1.shape
    z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    z = 0.5 * (z + np.conj(z[:, ::-1, ::-1]))
    z *= (1.0 + mag) ** (-decay)
    kmax = np.inf if kmax is None else kmax
    z *= (mag >= kmin) & (mag <= kmax) & (np.abs(b1) <= cut) & (np.abs(b2) <= cut)
    out = np.zeros((components, n, n), dtype=np.complex128)
    sel = (np.abs(b1) <= min(band, cut)) & (np.abs(b2) <= min(band, cut))
    out[:, b1[sel] % n, b2[sel] % n] = z[:, sel]
    return SpectralField(grid, out)
