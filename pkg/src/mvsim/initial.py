"""Named initial-condition presets.

Every preset returns exactly constrained data up to dealiasing: velocities
come from stream functions, deformation columns from stream functions plus
a constant, and magnetizations are normalized pointwise.
"""

from __future__ import annotations

import numpy as np

from .dynamics import renormalize_coeffs
from .errors import InvalidArgument
from .fields import SimState
from .spectral import SpectralField, leray_coeffs, random_field, to_coeffs, to_values


def _perp_grad(psi):
    """``(-d2 psi, d1 psi)`` for scalar coefficients ``psi``."""
    t = psi.grid.tables
    c = psi.coeffs[0]
    return np.stack([-1j * t.d2 * c, 1j * t.d1 * c])


def _stream(grid, seed, amp, kmax, decay=2.0):
    rng = np.random.default_rng(seed)
    return random_field(grid, rng, 1, kmax=kmax, kmin=1, decay=decay, band=int(np.ceil(kmax)))


def velocity(grid, name="zero", amp=1.0, seed=0, kmax=4.0, k=1):
    x1, x2 = grid.coordinates()
    if name == "zero":
        return np.zeros((2,) + grid.shape, dtype=np.complex128)
    if name == "shear":
        v = np.stack([amp * np.sin(k * x2), np.zeros_like(x2)])
        return to_coeffs(v) * grid.tables.keep
    if name == "taylor_green":
        v = amp * np.stack([np.sin(k * x1) * np.cos(k * x2), -np.cos(k * x1) * np.sin(k * x2)])
        return to_coeffs(v) * grid.tables.keep
    if name == "random":
        c = _perp_grad(_stream(grid, seed, amp, kmax))
        rms = np.sqrt(np.sum(np.abs(c) ** 2))
        return leray_coeffs(amp * c / max(rms, 1e-300), grid) * grid.tables.keep
    raise InvalidArgument(f"unknown velocity preset {name!r}")


def deformation(grid, name="zero", amp=1.0, seed=0, kmax=4.0, base=0.0):
    """Tensor with divergence-free columns: ``base * I`` plus stream-function columns."""
    out = np.zeros((4,) + grid.shape, dtype=np.complex128)
    out[0, 0, 0] = base
    out[3, 0, 0] = base
    if name in ("zero", "identity"):
        if name == "identity" and base == 0.0:
            out[0, 0, 0] = out[3, 0, 0] = 1.0
        return out
    if name == "random":
        for col in range(2):
            c = _perp_grad(_stream(grid, seed * 7 + col + 1, amp, kmax))
            rms = np.sqrt(np.sum(np.abs(c) ** 2))
            c = amp * c / max(rms, 1e-300)
            out[col] += c[0]  # F_{1,col}
            out[2 + col] += c[1]  # F_{2,col}
        return out * grid.tables.keep
    raise InvalidArgument(f"unknown deformation preset {name!r}")


def magnetization(grid, name="uniform", amp=0.2, seed=0, kmax=2.0, axis=(0.0, 0.0, 1.0),
                  radius=1.0, winding=2.0, center=(np.pi, np.pi), passes=3):
    x1, x2 = grid.coordinates()
    a = np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)
    if name == "uniform":
        m = np.broadcast_to(a.reshape(3, 1, 1), (3,) + grid.shape).copy()
    elif name == "random":
        rng = np.random.default_rng(seed)
        g = random_field(grid, rng, 3, kmax=kmax, kmin=1, decay=1.0, band=int(np.ceil(kmax)))
        gv = to_values(g.coeffs)
        rms = np.sqrt(np.mean(np.sum(gv * gv, axis=0)))
        m = a.reshape(3, 1, 1) + amp * gv / max(rms, 1e-300)
    elif name == "helix":
        beta = amp
        m = np.stack([np.sin(beta) * np.cos(x1), np.sin(beta) * np.sin(x1), np.cos(beta) * np.ones_like(x1)])
    elif name == "bubble":
        # equivariant profile: polar angle rises from 0 to winding*pi inside the disc
        d1 = (x1 - center[0] + np.pi) % (2 * np.pi) - np.pi
        d2 = (x2 - center[1] + np.pi) % (2 * np.pi) - np.pi
        r = np.hypot(d1, d2)
        s = np.clip(r / radius, 0.0, 1.0)
        theta = winding * np.pi * (1.0 - (1.0 - s) ** 2) ** 2 * (s < 1)
        theta = np.where(s >= 1, winding * np.pi, theta)
        ang = np.arctan2(d2, d1)
        m = np.stack([np.sin(theta) * np.cos(ang), np.sin(theta) * np.sin(ang), np.cos(theta)])
    else:
        raise InvalidArgument(f"unknown magnetization preset {name!r}")
    norm = np.sqrt(np.sum(m * m, axis=0))
    if np.min(norm) < 1e-8:
        raise InvalidArgument("magnetization preset vanishes somewhere; cannot normalize")
    c = to_coeffs(m / norm) * grid.tables.keep
    for _ in range(passes):
        c = renormalize_coeffs(c, grid)
    return c


def build_state(grid, u=("zero", {}), F=("zero", {}), M=("uniform", {}), t=0.0):
    """Assemble a state from ``(preset, options)`` pairs."""
    uc = velocity(grid, u[0], **u[1])
    Fc = deformation(grid, F[0], **F[1])
    Mc = magnetization(grid, M[0], **M[1])
    return SimState(t, SpectralField(grid, uc), SpectralField(grid, Fc), SpectralField(grid, Mc))


__all__ = ["build_state", "deformation", "magnetization", "velocity"]
