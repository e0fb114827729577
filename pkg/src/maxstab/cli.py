"""Command-line entry point ``maxstab``.

Exit codes: 0 success, 1 invalid input, 2 calibration failure, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import bench
from .domain import Hyperrectangle, read_grid_csv, regular_grid
from .exceptions import CalibrationError, ContractError, MaxstabError, NumericalError, StoppingCapError
from .representation import critical_alpha, solve_min_max_measure
from .variogram import Variogram, scale_for_box_variance

EXIT_OK, EXIT_INPUT, EXIT_CALIBRATION, EXIT_NUMERIC = 0, 1, 2, 3

_REP_TAGS = {"original": "original", "lambda": "lambda", "kstat": "kstat", "optimized": "optimized"}


def cmd_bench(args) -> int:
    seed = args.seed
    env = os.environ.get("MAXSTAB_SEED")
    if env is not None:
        seed = int(env)
    tables = bench.run_config(args.config, args.out, seed=seed, threads=args.threads)
    for name, rows in tables.items():
        print(f"{name}: {len(rows)} rows -> {Path(args.out) / (name + '.csv')}")
    return EXIT_OK


def cmd_profile(args) -> int:
    v = Variogram(args.alpha, scale_for_box_variance(args.alpha, args.sigma2, [1.0] * args.dim))
    grid = regular_grid(Hyperrectangle((1.0,) * args.dim), args.counts)
    rep = bench.build_representation(_REP_TAGS[args.rep], v, grid)
    bench.variance_profile_export(rep, args.out)
    print(f"max variance {np.max(rep.variance_profile):.10g} -> {args.out}")
    return EXIT_OK


def cmd_solve_measure(args) -> int:
    grid = read_grid_csv(args.grid)
    v = Variogram(args.alpha, args.scale)
    res = solve_min_max_measure(v, grid)
    with open(args.out, "w") as fh:
        fh.write(",".join([f"x{i + 1}" for i in range(grid.dim)] + ["weight"]) + "\n")
        for p, w in zip(grid.points, res.measure.weights):
            fh.write(",".join(f"{c:.17g}" for c in p) + f",{w:.17g}\n")
    print(f"max variance {res.max_variance:.12g} (gap {res.gap:.2e}, {res.n_iter} iterations) -> {args.out}")
    return EXIT_OK


def cmd_critical_alpha(args) -> int:
    grid = read_grid_csv(args.grid)
    print(f"{critical_alpha(grid, tol=args.tol):.10g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="maxstab", description="Brown-Resnick simulation benchmarks")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bench", help="run benchmark scenarios from a JSON config")
    b.add_argument("--config", required=True)
    b.add_argument("--out", required=True, help="output directory")
    b.add_argument("--seed", type=int, default=None, help="override every scenario seed")
    b.add_argument("--threads", type=int, default=1)
    b.set_defaults(func=cmd_bench)

    pr = sub.add_parser("profile", help="export the variance profile of a representation")
    pr.add_argument("--alpha", type=float, required=True)
    pr.add_argument("--sigma2", type=float, required=True, help="K-stationary variance on [-1,1]^d")
    pr.add_argument("--dim", type=int, choices=(1, 2), default=1)
    pr.add_argument("--counts", type=int, default=None, help="points per axis (501 in d=1, 21 in d=2)")
    pr.add_argument("--rep", choices=sorted(_REP_TAGS), required=True)
    pr.add_argument("--out", required=True)
    pr.set_defaults(func=cmd_profile)

    sm = sub.add_parser("solve-measure", help="min-max variance measure on a grid")
    sm.add_argument("--alpha", type=float, required=True)
    sm.add_argument("--scale", type=float, default=1.0)
    sm.add_argument("--grid", required=True, help="CSV with header x1..xd")
    sm.add_argument("--out", required=True)
    sm.set_defaults(func=cmd_solve_measure)

    ca = sub.add_parser("critical-alpha", help="largest alpha with a nonnegative stationary candidate")
    ca.add_argument("--grid", required=True)
    ca.add_argument("--tol", type=float, default=1e-6)
    ca.set_defaults(func=cmd_critical_alpha)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    if getattr(args, "counts", "unset") is None:
        args.counts = 501 if args.dim == 1 else 21
    try:
        return args.func(args)
    except CalibrationError as exc:
        print(f"calibration failure: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION
    except (NumericalError, StoppingCapError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ContractError, MaxstabError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
