"""Plain ``key = value`` run configuration.

Lines are ``key = value`` with ``#`` starting a comment. Unknown keys, type
mismatches and constraint violations raise :class:`ConfigError` carrying the
line number. ``emit_config`` writes every key in canonical order, and parsing
that text gives back an equal :class:`RunConfig`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

import numpy as np

from .errors import ConfigError
from .fields import AnisotropyModel, ElasticModel, ExternalField, FieldMode, ModelParams, SmoothCorrection
from .dynamics import StepperConfig
from .spectral import Grid

VELOCITY_PRESETS = ("zero", "shear", "taylor_green", "random")
DEFORMATION_PRESETS = ("zero", "identity", "random")
MAGNETIZATION_PRESETS = ("uniform", "random", "helix", "bubble")


def _positive(v):
    return v > 0


def _nonneg(v):
    return v >= 0


def _power_of_two(v):
    return v >= 8 and v & (v - 1) == 0


@dataclass(frozen=True)
class _Key:
    name: str
    kind: str  # int, float, str, vec, modes
    default: object
    check: object = None
    rule: str = ""


_KEYS = (
    _Key("n", "int", 64, _power_of_two, "must be a power of two >= 8"),
    _Key("dealias", "float", 2.0 / 3.0, lambda v: 0 < v <= 1, "must lie in (0, 1]"),
    _Key("nu", "float", 1.0, _positive, "must be positive"),
    _Key("kappa", "float", 1.0, _positive, "must be positive"),
    _Key("mu0", "float", 0.0, _nonneg, "must be non-negative"),
    _Key("chi", "float", 1.0, _positive, "must be positive"),
    _Key("correction_amplitude", "float", 0.0, _nonneg, "must be non-negative"),
    _Key("correction_scale", "float", 1.0, _positive, "must be positive"),
    _Key("alpha", "float", 0.0, _nonneg, "must be non-negative"),
    _Key("axis", "vec3", (0.0, 0.0, 1.0), lambda v: np.linalg.norm(v) > 0, "must be non-zero"),
    _Key("T", "float", 1.0, _positive, "must be positive"),
    _Key("hext_constant", "vec3", (0.0, 0.0, 0.0)),
    _Key("hext_modes", "modes", ()),
    _Key("dt", "float", 1e-3, _positive, "must be positive"),
    _Key("renormalize_every", "int", 1, lambda v: v >= 1, "must be >= 1"),
    _Key("cfl_safety", "float", 0.5, lambda v: 0 < v < 1, "must lie in (0, 1)"),
    _Key("max_halvings", "int", 4, _nonneg, "must be non-negative"),
    _Key("u_preset", "str", "zero", lambda v: v in VELOCITY_PRESETS, f"must be one of {', '.join(VELOCITY_PRESETS)}"),
    _Key("u_amp", "float", 1.0),
    _Key("u_seed", "int", 0),
    _Key("u_kmax", "float", 4.0, _positive, "must be positive"),
    _Key("F_preset", "str", "zero", lambda v: v in DEFORMATION_PRESETS, f"must be one of {', '.join(DEFORMATION_PRESETS)}"),
    _Key("F_amp", "float", 1.0),
    _Key("F_seed", "int", 0),
    _Key("F_kmax", "float", 4.0, _positive, "must be positive"),
    _Key("F_base", "float", 0.0),
    _Key("M_preset", "str", "uniform", lambda v: v in MAGNETIZATION_PRESETS, f"must be one of {', '.join(MAGNETIZATION_PRESETS)}"),
    _Key("M_amp", "float", 0.2),
    _Key("M_seed", "int", 0),
    _Key("M_kmax", "float", 2.0, _positive, "must be positive"),
    _Key("M_radius", "float", 1.0, _positive, "must be positive"),
    _Key("M_winding", "float", 2.0),
    _Key("M_center", "vec2", (math.pi, math.pi)),
    _Key("snapshot_every", "int", 0, _nonneg, "must be non-negative"),
    _Key("scan_radius", "float", 0.5, lambda v: 0 <= v < math.pi, "must lie in [0, pi)"),
    _Key("scan_stride", "int", 1, lambda v: v >= 1, "must be >= 1"),
    _Key("eps0", "float", 1.0, _positive, "must be positive"),
    _Key("growth_rate", "float", 50.0, _positive, "must be positive"),
)

_BY_NAME = {k.name: k for k in _KEYS}


@dataclass(frozen=True)
class RunConfig:
    n: int = 64
    dealias: float = 2.0 / 3.0
    nu: float = 1.0
    kappa: float = 1.0
    mu0: float = 0.0
    chi: float = 1.0
    correction_amplitude: float = 0.0
    correction_scale: float = 1.0
    alpha: float = 0.0
    axis: tuple = (0.0, 0.0, 1.0)
    T: float = 1.0
    hext_constant: tuple = (0.0, 0.0, 0.0)
    hext_modes: tuple = ()
    dt: float = 1e-3
    renormalize_every: int = 1
    cfl_safety: float = 0.5
    max_halvings: int = 4
    u_preset: str = "zero"
    u_amp: float = 1.0
    u_seed: int = 0
    u_kmax: float = 4.0
    F_preset: str = "zero"
    F_amp: float = 1.0
    F_seed: int = 0
    F_kmax: float = 4.0
    F_base: float = 0.0
    M_preset: str = "uniform"
    M_amp: float = 0.2
    M_seed: int = 0
    M_kmax: float = 2.0
    M_radius: float = 1.0
    M_winding: float = 2.0
    M_center: tuple = (math.pi, math.pi)
    snapshot_every: int = 0
    scan_radius: float = 0.5
    scan_stride: int = 1
    eps0: float = 1.0
    growth_rate: float = 50.0

    @property
    def steps(self):
        return int(round(self.T / self.dt))

    def grid(self):
        return Grid(self.n, self.dealias)

    def model_params(self):
        correction = None
        if self.correction_amplitude > 0:
            correction = SmoothCorrection(self.correction_amplitude, self.correction_scale)
        modes = tuple(
            FieldMode((m[0], m[1]), (m[2], m[3], m[4]), omega=m[5], phase_x=m[6], phase_t=m[7])
            for m in self.hext_modes
        )
        return ModelParams(
            nu=self.nu,
            kappa=self.kappa,
            mu0=self.mu0,
            elastic=ElasticModel(self.chi, correction),
            aniso=AnisotropyModel(self.alpha, self.axis),
            hext=ExternalField(constant=self.hext_constant, modes=modes),
            T=self.T,
        )

    def stepper(self):
        return StepperConfig(self.dt, self.renormalize_every, self.cfl_safety)

    def initial_specs(self):
        u = (self.u_preset, dict(amp=self.u_amp, seed=self.u_seed, kmax=self.u_kmax))
        if self.u_preset in ("shear", "taylor_green"):
            u = (self.u_preset, dict(amp=self.u_amp))
        elif self.u_preset == "zero":
            u = ("zero", {})
        F = (self.F_preset, dict(amp=self.F_amp, seed=self.F_seed, kmax=self.F_kmax, base=self.F_base))
        M = (
            self.M_preset,
            dict(amp=self.M_amp, seed=self.M_seed, kmax=self.M_kmax, axis=self.axis,
                 radius=self.M_radius, winding=self.M_winding, center=self.M_center),
        )
        return u, F, M

    def initial_state(self):
        from .initial import build_state

        u, F, M = self.initial_specs()
        return build_state(self.grid(), u=u, F=F, M=M)

    def replace(self, **changes):
        return replace(self, **changes)


def _parse_value(key, raw):
    kind = key.kind
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    if kind == "str":
        return raw
    if kind in ("vec2", "vec3"):
        parts = [float(p) for p in raw.replace(",", " ").split()]
        if len(parts) != int(kind[-1]):
            raise ValueError(f"expected {kind[-1]} numbers")
        return tuple(parts)
    if kind == "modes":
        modes = []
        for chunk in raw.split(";"):
            chunk = chunk.strip()
            if not chunk:
                continue
            nums = [float(p) for p in chunk.replace(",", " ").split()]
            if len(nums) not in (5, 6, 7, 8):
                raise ValueError("each mode needs k1 k2 a1 a2 a3 [omega phase_x phase_t]")
            nums += [0.0] * (8 - len(nums))
            modes.append(tuple(nums))
        return tuple(modes)
    raise AssertionError(kind)


def parse_config(text):
    """Parse and validate configuration text."""
    values = {}
    lines = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError("expected 'key = value'", line=lineno)
        name, raw = (s.strip() for s in body.split("=", 1))
        key = _BY_NAME.get(name)
        if key is None:
            raise ConfigError(f"unknown key {name!r}", line=lineno, key=name)
        if name in values:
            raise ConfigError(f"duplicate key {name!r}", line=lineno, key=name)
        try:
            value = _parse_value(key, raw)
        except ValueError as exc:
            raise ConfigError(f"{name} expects {key.kind}: {exc}", line=lineno, key=name) from None
        if key.check is not None and not key.check(value):
            raise ConfigError(f"{name} {key.rule}", line=lineno, key=name)
        values[name] = value
        lines[name] = lineno
    cfg = RunConfig(**values)
    ratio = cfg.T / cfg.dt
    if abs(ratio - round(ratio)) > 1e-6 * max(1.0, ratio):
        raise ConfigError("T/dt must be a whole number of steps", line=lines.get("dt", lines.get("T")), key="dt")
    return cfg


def _format(key, value):
    if key.kind == "float":
        return repr(float(value))
    if key.kind in ("vec2", "vec3"):
        return " ".join(repr(float(v)) for v in value)
    if key.kind == "modes":
        return "; ".join(" ".join(repr(float(v)) for v in m) for m in value)
    return str(value)


def emit_config(cfg):
    """Canonical text for ``cfg`` covering every key."""
    out = []
    for f in fields(RunConfig):
        key = _BY_NAME[f.name]
        out.append(f"{f.name} = {_format(key, getattr(cfg, f.name))}")
    return "\n".join(out) + "\n"


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
