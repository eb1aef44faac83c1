"""Run orchestration: stepping loop, report files and snapshots.

Files written by :func:`run` into the output directory:

``config.txt``
    Canonical echo of the configuration.
``energy.csv``
    One row per recorded state. Columns are :data:`ENERGY_COLUMNS`:
    ``step``, ``dt`` and the :class:`~mvsim.diagnostics.EnergyReport` fields,
    then the blow-up indicators ``Q`` and ``B`` and the local-energy scan
    maximum ``scan_max`` (``nan`` when scanning is off).
``events.csv``
    Columns :data:`EVENT_COLUMNS`; one row per halving of ``dt`` and one row
    for a terminal blow-up.
``candidates.csv``
    Singular-time candidates found by the scan, columns
    :data:`CANDIDATE_COLUMNS`.
``snap_NNNNNN.mvs``, ``final.mvs``, ``last_good.mvs``
    Snapshots at the configured cadence, at the end, or at the last good state
    before a blow-up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

from .config import RunConfig, emit_config, load_config
from .diagnostics import (
    EnergyReport,
    Trajectory,
    energy_inequality_residual,
    energy_report,
    local_energy_scan,
    singularity_scan,
    state_norms,
)
from .dynamics import step, with_pressure
from .errors import ConfigError, CorruptSnapshot, InvalidArgument, NumericalBlowup, StepRejected
from .io import read_snapshot, write_csv, write_snapshot
from .uniqueness import TRACE_COLUMNS, Perturbation, osgood_bound_check, twin_run

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BLOWUP = 3
EXIT_IO = 4

ENERGY_COLUMNS = ("step", "dt", *EnergyReport.columns(), "Q", "B", "scan_max")
EVENT_COLUMNS = ("step", "t", "dt", "kind", "reason", "message")
CANDIDATE_COLUMNS = ("step", "t", "x1", "x2", "local_energy", "growth")


@dataclass
class RunResult:
    status: int
    state: object
    trajectory: Trajectory
    steps: List[int] = field(default_factory=list)
    dts: List[float] = field(default_factory=list)
    events: List[tuple] = field(default_factory=list)
    error: Optional[NumericalBlowup] = None


def _snapshot(state, params, path):
    write_snapshot(with_pressure(state, params), path)


def simulate(cfg, out_dir=None, state=None):
    """Integrate ``cfg`` to its final time, halving ``dt`` on CFL rejection.

    Returns a :class:`RunResult`; ``status`` is :data:`EXIT_BLOWUP` if the run
    ended in a :class:`NumericalBlowup`, in which case ``error`` carries the
    indicator history.
    """
    params = cfg.model_params()
    stepper = cfg.stepper()
    if state is None:
        state = cfg.initial_state()
    radius = cfg.scan_radius if cfg.scan_radius > 0 else None
    traj = Trajectory(params, scan_radius=radius, scan_stride=cfg.scan_stride)
    result = RunResult(EXIT_OK, state, traj)
    traj.record(state)
    result.steps.append(0)
    result.dts.append(0.0)

    out = Path(out_dir) if out_dir is not None else None
    halvings = 0
    index = 0
    T = cfg.T
    while state.t < T - 0.5 * stepper.dt:
        try:
            new = step(state, stepper, params, step_index=index)
        except StepRejected as exc:
            if halvings < cfg.max_halvings:
                halvings += 1
                stepper = stepper.with_dt(0.5 * stepper.dt)
                result.events.append((index, state.t, stepper.dt, "halving", "cfl", str(exc)))
                continue
            err = NumericalBlowup(
                f"CFL rejection persists after {halvings} halvings: {exc}",
                t=state.t, step=index, history=traj.indicator_history(), reason="cfl",
            )
            result.error = err
            break
        except NumericalBlowup as exc:
            exc.history = traj.indicator_history()
            if exc.t is None:
                exc.t = state.t
            result.error = exc
            break
        index += 1
        state = new
        traj.record(state)
        result.steps.append(index)
        result.dts.append(stepper.dt)
        if out is not None and cfg.snapshot_every and index % cfg.snapshot_every == 0:
            _snapshot(state, params, out / f"snap_{index:06d}.mvs")

    result.state = state
    if result.error is not None:
        result.status = EXIT_BLOWUP
        e = result.error
        result.events.append((index, state.t, stepper.dt, "blowup", e.reason, str(e)))
        if out is not None:
            _snapshot(state, params, out / "last_good.mvs")
    elif out is not None:
        _snapshot(state, params, out / "final.mvs")
    return result


def energy_rows(result, cfg):
    traj = result.trajectory
    params = traj.params
    reports = traj.reports
    if len(reports) > 0:
        series = energy_inequality_residual(reports, params)
        reports = [r.replace(inequality_residual=float(v)) for r, v in zip(reports, series.residual)]
    for i, r in enumerate(reports):
        scan = traj.scans[i]
        n = traj.norms[i]
        yield (
            result.steps[i], result.dts[i], *r.row(), n.Q, n.B,
            scan.max_value if scan is not None else math.nan,
        )


def candidate_rows(result, cfg):
    traj = result.trajectory
    if traj.scan_radius is None:
        return []
    report = singularity_scan(traj, cfg.eps0, rate=cfg.growth_rate)
    return [
        (result.steps[c.step], c.t, c.center[0], c.center[1], c.local_energy, c.growth)
        for c in report.candidates
    ]


def run(cfg, out_dir):
    """Run ``cfg`` writing all report files into ``out_dir``; return the exit status."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(emit_config(cfg), encoding="utf-8")
    result = simulate(cfg, out)
    write_csv(out / "energy.csv", ENERGY_COLUMNS, energy_rows(result, cfg))
    write_csv(out / "events.csv", EVENT_COLUMNS, result.events)
    write_csv(out / "candidates.csv", CANDIDATE_COLUMNS, candidate_rows(result, cfg))
    return result.status


# ---------------------------------------------------------------------------
# diagnose

DIAG_ENERGY_COLUMNS = ("file", *EnergyReport.columns())
DIAG_SCAN_COLUMNS = ("file", "t", "x1", "x2", "local_energy")
DIAG_BLOWUP_COLUMNS = ("file", "t", "Q", "B", "scan_max", "x1", "x2", "flagged")


def _snapshot_files(path):
    path = Path(path)
    if path.is_dir():
        files = sorted(path.glob("*.mvs"))
        if not files:
            raise FileNotFoundError(f"no snapshots in {path}")
        return files, path
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    return [path], path.parent


def diagnose(in_path, out_dir=None, cfg=None, scan_radius=None, eps0=None):
    """Energy, scan and blow-up reports for a snapshot or a run directory.

    Model parameters come from ``cfg``, else from ``config.txt`` next to the
    snapshots, else from defaults. Returns the list of files written.
    """
    files, base = _snapshot_files(in_path)
    if cfg is None:
        echo = base / "config.txt"
        cfg = load_config(echo) if echo.exists() else RunConfig()
    R = cfg.scan_radius if scan_radius is None else scan_radius
    if not R > 0:
        raise InvalidArgument("scan radius must be positive")
    eps0 = cfg.eps0 if eps0 is None else eps0
    params = cfg.model_params()
    out = Path(out_dir) if out_dir is not None else base
    out.mkdir(parents=True, exist_ok=True)

    states = [(f.name, read_snapshot(f, cfg.dealias)) for f in files]
    states.sort(key=lambda item: (item[1].t, item[0]))
    energy, scans, blowup = [], [], []
    for name, s in states:
        energy.append((name, *energy_report(s, params).row()))
        scan = local_energy_scan(s.M, R, cfg.scan_stride, s.t)
        for c, v in zip(scan.centers, scan.values):
            scans.append((name, s.t, c[0], c[1], v))
        norms = state_norms(s)
        x1, x2 = scan.argmax
        blowup.append((name, s.t, norms.Q, norms.B, scan.max_value, x1, x2, scan.max_value >= eps0))

    written = []

    def emit(fname, cols, rows):
        write_csv(out / fname, cols, rows)
        written.append(out / fname)

    emit("diagnose_energy.csv", DIAG_ENERGY_COLUMNS, energy)
    emit("diagnose_scan.csv", DIAG_SCAN_COLUMNS, scans)
    emit("diagnose_blowup.csv", DIAG_BLOWUP_COLUMNS, blowup)
    series = {
        "plot_energy.xy": [(row[1], row[DIAG_ENERGY_COLUMNS.index("E_total")]) for row in energy],
        "plot_Q.xy": [(row[1], row[2]) for row in blowup],
        "plot_scan_max.xy": [(row[1], row[4]) for row in blowup],
    }
    for fname, pts in series.items():
        with open(out / fname, "w", encoding="utf-8") as fh:
            for x, y in pts:
                fh.write(f"{float(x)!r} {float(y)!r}\n")
        written.append(out / fname)
    return written


# ---------------------------------------------------------------------------
# twin runs


def parse_perturbation(spec):
    """``TARGET:EPS[:SEED[:KMAX]]``, for example ``M:1e-4`` or ``u:1e-3:7``."""
    parts = spec.split(":")
    if not 2 <= len(parts) <= 4 or parts[0] not in ("u", "F", "M"):
        raise ConfigError(f"perturbation {spec!r} must look like TARGET:EPS[:SEED[:KMAX]] with TARGET in u, F, M",
                          key="perturb")
    try:
        eps = float(parts[1])
        seed = int(parts[2]) if len(parts) > 2 else 0
        kmax = float(parts[3]) if len(parts) > 3 else 3.0
    except ValueError:
        raise ConfigError(f"perturbation {spec!r} has a malformed number", key="perturb") from None
    if eps < 0 or not math.isfinite(eps) or kmax <= 0:
        raise ConfigError("perturbation needs eps >= 0 and kmax > 0", key="perturb")
    return Perturbation(parts[0], eps, seed, kmax)


TWIN_SUMMARY_COLUMNS = ("osgood_integral", "vacuous", "passed", "steps", "event")


def twin(cfg, perturbation, out_dir):
    """Twin run writing ``twin.csv`` and ``twin_summary.csv``; return the exit status."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(emit_config(cfg), encoding="utf-8")
    state = cfg.initial_state()
    trace = twin_run(state, cfg.model_params(), cfg.stepper(), cfg.steps, perturbation)
    write_csv(out / "twin.csv", TRACE_COLUMNS, trace.rows())
    report = osgood_bound_check(trace)
    write_csv(
        out / "twin_summary.csv",
        TWIN_SUMMARY_COLUMNS,
        [(report.integral, report.vacuous, report.passed, len(trace.times) - 1, trace.event or "")],
    )
    return EXIT_BLOWUP if trace.event else EXIT_OK


def classify(exc):
    """Exit status for an exception escaping a command."""
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, NumericalBlowup):
        return EXIT_BLOWUP
    if isinstance(exc, (CorruptSnapshot, OSError)):
        return EXIT_IO
    return None


__all__ = [
    "CANDIDATE_COLUMNS", "ENERGY_COLUMNS", "EVENT_COLUMNS", "EXIT_BLOWUP", "EXIT_CONFIG", "EXIT_IO",
    "EXIT_OK", "RunResult", "classify", "diagnose", "parse_perturbation", "run", "simulate", "twin",
]
