import math
import struct
import subprocess
import sys
import zlib
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mvsim import cli
from mvsim.config import (
    DEFORMATION_PRESETS,
    MAGNETIZATION_PRESETS,
    VELOCITY_PRESETS,
    RunConfig,
    emit_config,
    load_config,
    parse_config,
)
from mvsim.dynamics import with_pressure
from mvsim.errors import ConfigError, CorruptSnapshot, InvalidArgument
from mvsim.fields import ModelParams, SimState, zero_state
from mvsim.initial import build_state, magnetization
from mvsim.io import parse_snapshot, read_csv, read_snapshot, snapshot_bytes, snapshot_size, write_csv, write_snapshot
from mvsim.runner import (
    ENERGY_COLUMNS,
    EXIT_BLOWUP,
    EXIT_CONFIG,
    EXIT_IO,
    EXIT_OK,
    diagnose,
    parse_perturbation,
    run,
)
from mvsim.spectral import Grid, SpectralField, inverse_transform

DATA = Path(__file__).parent / "data"

EQUILIBRIUM = """\
n = 16
T = 0.1
dt = 1e-3
alpha = 0.5
snapshot_every = 50
"""

# strongly forced data whose CFL bound collapses within the first hundred steps
BLOWUP = """\
n = 32
T = 0.2
dt = 2e-3
nu = 0.01
kappa = 0.01
max_halvings = 0
u_preset = random
u_amp = 0.5
F_preset = random
F_amp = 1.0
F_base = 40.0
M_preset = random
M_amp = 1.0
M_kmax = 4
"""


def random_state(n=16, seed=0):
    s = build_state(
        Grid(n),
        u=("random", dict(amp=0.3, seed=seed, kmax=3)),
        F=("random", dict(amp=0.3, seed=seed, kmax=3, base=1.0)),
        M=("random", dict(amp=0.15, seed=seed, kmax=1.5)),
    )
    return with_pressure(s.replace(t=0.125 * seed), ModelParams())


# ---------------------------------------------------------------------------
# configuration


def test_empty_config_gives_documented_defaults():
    cfg = parse_config("# nothing set\n\n")
    assert cfg == RunConfig()
    text = emit_config(cfg)
    for line in ("n = 64", "nu = 1.0", "dt = 0.001", "T = 1.0", "M_preset = uniform", "scan_radius = 0.5"):
        assert line in text.splitlines()
    assert cfg.steps == 1000


def test_constraint_error_names_the_line():
    with pytest.raises(ConfigError) as info:
        parse_config("n = 16\n\nnu = -1\n")
    assert info.value.line == 3
    assert "nu must be positive" in str(info.value)
    assert str(info.value).startswith("line 3")


@pytest.mark.parametrize(
    "text, line, fragment",
    [
        ("bogus = 1", 1, "unknown key"),
        ("n = 16\nn = 32", 2, "duplicate"),
        ("n = sixteen", 1, "expects int"),
        ("n = 12", 1, "power of two"),
        ("axis = 1 2", 1, "expects vec3"),
        ("u_preset = vortex", 1, "must be one of"),
        ("just words", 1, "key = value"),
        ("hext_modes = 1 0 0.1", 1, "each mode"),
    ],
)
def test_config_errors(text, line, fragment):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.line == line
    assert fragment in str(info.value)


def test_step_count_must_be_whole():
    assert parse_config("T = 0.3\ndt = 0.1\n").steps == 3
    with pytest.raises(ConfigError) as info:
        parse_config("T = 0.25\ndt = 0.1\n")
    assert "T/dt" in str(info.value)


finite = st.floats(-1e6, 1e6, allow_nan=False)
positive = st.floats(1e-6, 1e6, allow_nan=False)
modes = st.lists(st.tuples(st.integers(-4, 4), st.integers(-4, 4), finite, finite, finite, finite, finite, finite), max_size=3)


@st.composite
def configs(draw):
    dt = draw(st.sampled_from([1e-3, 2e-3, 5e-4, 0.01]))
    steps = draw(st.integers(1, 5000))
    raw_modes = [m for m in draw(modes) if (m[0], m[1]) != (0, 0)]
    return RunConfig(
        n=draw(st.sampled_from([8, 16, 32, 64, 128])),
        nu=draw(positive),
        kappa=draw(positive),
        mu0=draw(st.floats(0, 10)),
        alpha=draw(st.floats(0, 10)),
        axis=(draw(finite), draw(finite), 1.0),
        hext_constant=(draw(finite), draw(finite), draw(finite)),
        hext_modes=tuple(tuple(float(v) for v in m) for m in raw_modes),
        dt=dt,
        T=steps * dt,
        u_preset=draw(st.sampled_from(VELOCITY_PRESETS)),
        F_preset=draw(st.sampled_from(DEFORMATION_PRESETS)),
        M_preset=draw(st.sampled_from(MAGNETIZATION_PRESETS)),
        M_seed=draw(st.integers(0, 2**31)),
        M_center=(draw(finite), draw(finite)),
        scan_radius=draw(st.floats(0, 3.0)),
    )


@given(configs())
def test_config_round_trip(cfg):
    assert parse_config(emit_config(cfg)) == cfg


# ---------------------------------------------------------------------------
# snapshots


def test_snapshot_round_trip_is_bit_exact(tmp_path):
    s = random_state(16, seed=3)
    path = tmp_path / "s.mvs"
    write_snapshot(s, path)
    assert path.stat().st_size == snapshot_size(16)
    back = read_snapshot(path)
    assert back.t == s.t
    for name in ("u", "F", "M", "p"):
        assert np.array_equal(getattr(back, name).coeffs, getattr(s, name).coeffs)


def test_snapshot_needs_pressure(grid16):
    with pytest.raises(InvalidArgument):
        snapshot_bytes(zero_state(grid16).replace(p=None))


def test_corrupt_snapshots_are_rejected():
    data = snapshot_bytes(random_state(16, seed=1))
    bad = {
        "truncated": data[:-100],
        "header only": data[:10],
        "magic": b"XVSIM1" + data[6:],
        "version": data[:6] + struct.pack("<I", 2) + data[10:],
        "grid": data[:10] + struct.pack("<I", 12) + data[14:],
        "checksum": data[:200] + bytes([data[200] ^ 1]) + data[201:],
    }
    for blob in bad.values():
        with pytest.raises(CorruptSnapshot):
            parse_snapshot(blob)


def hand_built_snapshot():
    """An ``n = 8`` snapshot assembled with ``struct`` alone: u = (cos x2, 0), M = e3, F = I, p = 0."""
    n = 8
    arrays = np.zeros((10, n, n), dtype=complex)
    arrays[0, 0, 1] = arrays[0, 0, n - 1] = 0.5
    arrays[2, 0, 0] = arrays[5, 0, 0] = 1.0
    arrays[8, 0, 0] = 1.0
    payload = b"".join(struct.pack("<dd", z.real, z.imag) for z in arrays.ravel())
    return b"MVSIM1" + struct.pack("<IId", 1, n, 0.25) + payload + struct.pack("<I", zlib.crc32(payload))


def test_hand_built_snapshot_parses_to_known_fields(tmp_path):
    path = tmp_path / "fixture.mvs"
    path.write_bytes(hand_built_snapshot())
    s = read_snapshot(path)
    assert s.t == 0.25 and s.grid.n == 8
    _, x2 = s.grid.coordinates()
    u = inverse_transform(s.u)
    assert np.max(np.abs(u[0] - np.cos(x2))) < 1e-15 and np.max(np.abs(u[1])) == 0
    assert np.allclose(inverse_transform(s.F)[:, 0, 0], [1, 0, 0, 1])
    assert np.allclose(inverse_transform(s.M)[:, 3, 5], [0, 0, 1])
    assert snapshot_bytes(s) == path.read_bytes()


def test_csv_cells_are_full_precision(tmp_path):
    path = tmp_path / "x.csv"
    values = [0.1, 1 / 3, -0.0, 1e-300, math.nan, True, 7]
    write_csv(path, ["a", "b", "c", "d", "e", "f", "g"], [values])
    text = path.read_text()
    assert text.splitlines()[1] == "0.1,0.3333333333333333,0.0,1e-300,nan,1,7"
    cols, rows = read_csv(path)
    assert rows[0][1] == 1 / 3 and math.isnan(rows[0][4])


# ---------------------------------------------------------------------------
# runs


def test_equilibrium_run_reports_zeros(tmp_path):
    cfg = parse_config(EQUILIBRIUM)
    assert run(cfg, tmp_path) == EXIT_OK
    cols, rows = read_csv(tmp_path / "energy.csv")
    assert tuple(cols) == ENERGY_COLUMNS
    assert len(rows) == 101
    for row in rows:
        r = dict(zip(cols, row))
        for name in ("kinetic", "elastic", "exchange", "aniso", "zeeman", "diss_u", "diss_F", "diss_M",
                     "E_total", "inequality_residual", "Q", "scan_max"):
            assert r[name] == 0.0
        assert r["B"] == 1.0
    assert (tmp_path / "snap_000050.mvs").exists() and (tmp_path / "final.mvs").exists()
    assert load_config(tmp_path / "config.txt") == cfg


def test_runs_are_byte_identical(tmp_path):
    cfg = load_config(DATA / "small_run.cfg")
    run(cfg, tmp_path / "a")
    run(cfg, tmp_path / "b")
    for name in ("energy.csv", "events.csv", "candidates.csv", "final.mvs"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_small_run_matches_golden_file(tmp_path):
    run(load_config(DATA / "small_run.cfg"), tmp_path)
    cols, rows = read_csv(tmp_path / "energy.csv")
    gcols, grows = read_csv(DATA / "small_run_energy.csv")
    assert cols == gcols and len(rows) == len(grows)
    for row, grow in zip(rows, grows):
        for a, b in zip(row, grow):
            assert abs(a - b) <= 1e-12 * max(1.0, abs(b))


def test_blowup_run_leaves_last_good_snapshot(tmp_path):
    assert run(parse_config(BLOWUP), tmp_path) == EXIT_BLOWUP
    _, events = read_csv(tmp_path / "events.csv")
    assert events[-1][3] == "blowup" and events[-1][4] == "cfl"
    last = read_snapshot(tmp_path / "last_good.mvs")
    assert last.t == pytest.approx(events[-1][1])
    assert not (tmp_path / "final.mvs").exists()


# ---------------------------------------------------------------------------
# diagnose and the command line


def test_diagnose_equilibrium_snapshot_has_zero_scan(tmp_path):
    assert run(parse_config(EQUILIBRIUM), tmp_path) == EXIT_OK
    written = diagnose(tmp_path / "final.mvs", tmp_path / "diag")
    assert {p.name for p in written} >= {"diagnose_energy.csv", "diagnose_scan.csv", "diagnose_blowup.csv",
                                          "plot_energy.xy", "plot_Q.xy", "plot_scan_max.xy"}
    _, scan = read_csv(tmp_path / "diag" / "diagnose_scan.csv")
    assert len(scan) == 16 * 16 and all(row[4] == 0.0 for row in scan)
    _, blow = read_csv(tmp_path / "diag" / "diagnose_blowup.csv")
    assert blow[0][2] == 0.0 and blow[0][-1] == 0.0


def test_diagnose_finds_injected_bump(tmp_path):
    g = Grid(32)
    center = (2.0, 4.0)
    M = SpectralField(g, magnetization(g, "bubble", radius=0.6, winding=1, center=center))
    s = with_pressure(zero_state(g).replace(M=M), ModelParams())
    write_snapshot(s, tmp_path / "bump.mvs")
    diagnose(tmp_path / "bump.mvs", scan_radius=0.5, eps0=5.0)
    _, blow = read_csv(tmp_path / "diagnose_blowup.csv")
    x1, x2, flagged = blow[0][5], blow[0][6], blow[0][7]
    assert abs(x1 - center[0]) <= g.h and abs(x2 - center[1]) <= g.h
    assert flagged == 1.0


def test_diagnose_directory_orders_by_time(tmp_path):
    for i, seed in enumerate((2, 1)):
        write_snapshot(random_state(16, seed=seed), tmp_path / f"s{i}.mvs")
    diagnose(tmp_path)
    _, rows = read_csv(tmp_path / "diagnose_energy.csv")
    assert [r[0] for r in rows] == ["s1.mvs", "s0.mvs"]
    lines = (tmp_path / "plot_Q.xy").read_text().splitlines()
    assert [float(line.split()[0]) for line in lines] == [0.125, 0.25]


def test_lp_selftest_command_all_pass(tmp_path, capsys):
    out = tmp_path / "lp.csv"
    assert cli.main(["lp-selftest", "--n", "32", "--trials", "100", "--out", str(out)]) == EXIT_OK
    printed = capsys.readouterr().out.splitlines()
    assert printed and all(line.startswith("PASS") for line in printed)
    cols, rows = read_csv(out)
    assert cols[-1] == "status" and all(r[-1] == "PASS" for r in rows)


def test_twin_command(tmp_path):
    cfg = tmp_path / "twin.cfg"
    cfg.write_text(EQUILIBRIUM.replace("T = 0.1", "T = 0.02") + "M_preset = helix\nM_amp = 0.3\n")
    assert cli.main(["twin", "--config", str(cfg), "--perturb", "M:1e-3", "--out", str(tmp_path / "t")]) == 0
    cols, rows = read_csv(tmp_path / "t" / "twin.csv")
    assert cols[:3] == ["t", "deltaE", "deltaD"] and len(rows) == 21 and rows[0][1] > 0
    _, summary = read_csv(tmp_path / "t" / "twin_summary.csv")
    assert summary[0][2] == 1.0


def test_perturbation_spec():
    p = parse_perturbation("u:1e-3:7:2.5")
    assert (p.target, p.eps, p.seed, p.kmax) == ("u", 1e-3, 7, 2.5)
    for bad in ("x:1e-3", "M", "M:abc", "M:-1", "M:1:2:3:4"):
        with pytest.raises(ConfigError):
            parse_perturbation(bad)


def test_exit_statuses(tmp_path, capsys):
    good = tmp_path / "good.cfg"
    good.write_text(EQUILIBRIUM)
    assert cli.main(["run", "--config", str(good), "--out", str(tmp_path / "ok")]) == EXIT_OK

    bad = tmp_path / "bad.cfg"
    bad.write_text("nu = -1\n")
    assert cli.main(["run", "--config", str(bad), "--out", str(tmp_path / "x")]) == EXIT_CONFIG
    assert "line 1: nu must be positive" in capsys.readouterr().err
    with pytest.raises(SystemExit) as info:
        cli.main(["run", "--config", str(good)])
    assert info.value.code == EXIT_CONFIG

    blow = tmp_path / "blow.cfg"
    blow.write_text(BLOWUP)
    assert cli.main(["run", "--config", str(blow), "--out", str(tmp_path / "b")]) == EXIT_BLOWUP

    assert cli.main(["run", "--config", str(tmp_path / "missing.cfg"), "--out", str(tmp_path / "m")]) == EXIT_IO
    corrupt = tmp_path / "corrupt.mvs"
    corrupt.write_bytes(b"MVSIM1" + b"\0" * 40)
    assert cli.main(["diagnose", "--in", str(corrupt)]) == EXIT_IO
    assert cli.main(["diagnose", "--in", str(tmp_path / "empty_dir_missing")]) == EXIT_IO


def test_console_entry_point_runs():
    proc = subprocess.run([sys.executable, "-m", "mvsim.cli", "run", "--config", "/nonexistent", "--out", "/tmp/x"],
                          capture_output=True, text=True)
    assert proc.returncode == EXIT_IO
    assert proc.stderr.startswith("mvsim: error:")


def test_snapshot_state_type(tmp_path):
    s = random_state(16, seed=5)
    write_snapshot(s, tmp_path / "a.mvs")
    assert isinstance(read_snapshot(tmp_path / "a.mvs"), SimState)
