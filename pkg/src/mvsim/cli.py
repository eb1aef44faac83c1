"""Command line entry point.

Exit statuses: 0 success, 2 configuration or usage error, 3 numerical
blow-up, 4 I/O error (unreadable input, corrupt snapshot, unwritable output).
``lp-selftest`` exits with 1 when a check fails.
"""

from __future__ import annotations

import argparse
import sys

from .config import load_config
from .errors import ConfigError
from .io import write_csv
from .runner import EXIT_OK, classify, diagnose, parse_perturbation, run, twin
from .selftest import RESULT_COLUMNS, run_selftest


def _parser():
    p = argparse.ArgumentParser(prog="mvsim", description="Pseudo-spectral magnetoviscoelastic flow simulator.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="integrate a configuration")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True)

    d = sub.add_parser("diagnose", help="reports for a snapshot or run directory")
    d.add_argument("--in", dest="inp", required=True)
    d.add_argument("--out", default=None, help="output directory (default: next to the input)")
    d.add_argument("--config", default=None, help="model parameters (default: config.txt next to the input)")
    d.add_argument("--scan-radius", type=float, default=None)
    d.add_argument("--eps0", type=float, default=None)

    t = sub.add_parser("twin", help="run a state and its perturbed twin")
    t.add_argument("--config", required=True)
    t.add_argument("--perturb", required=True, help="TARGET:EPS[:SEED[:KMAX]], TARGET in u, F, M")
    t.add_argument("--out", required=True)

    s = sub.add_parser("lp-selftest", help="dyadic identities and fitted constants on one grid")
    s.add_argument("--n", type=int, default=32)
    s.add_argument("--trials", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    return p


def _dispatch(args):
    if args.command == "run":
        return run(load_config(args.config), args.out)
    if args.command == "diagnose":
        cfg = load_config(args.config) if args.config else None
        for path in diagnose(args.inp, args.out, cfg, args.scan_radius, args.eps0):
            print(path)
        return EXIT_OK
    if args.command == "twin":
        return twin(load_config(args.config), parse_perturbation(args.perturb), args.out)
    if args.command == "lp-selftest":
        if args.trials < 1:
            raise ConfigError("trials must be positive", key="trials")
        try:
            results = run_selftest(args.n, args.trials, args.seed)
        except ValueError as exc:
            raise ConfigError(str(exc), key="n") from None
        write_csv(args.out, RESULT_COLUMNS, [r.row() for r in results])
        failed = [r.name for r in results if not r.passed]
        for r in results:
            print(f"{'PASS' if r.passed else 'FAIL'} {r.name} {r.value!r}")
        return EXIT_OK if not failed else 1
    raise AssertionError(args.command)


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        return _dispatch(args)
    except Exception as exc:  # map library errors onto exit statuses
        status = classify(exc)
        if status is None:
            raise
        print(f"mvsim: error: {exc}", file=sys.stderr)
        return status


if __name__ == "__main__":
    sys.exit(main())
