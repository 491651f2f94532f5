"""Command-line front end.

Subcommands:
    generate   build a test map and write it to a map file
    analyze    run the rigidity pipeline on a map file, emit a JSON report
    center     find the mean-centering dilation for a map file
    sweep      run a sweep from a JSON config, write CSV rows
    converge   residuals-vs-resolution table for one family
    constants  print the closed-form constants for a given theta

Exit codes: 0 all checks passed, 1 anomalies flagged, 2 hard errors.
"""

import argparse
import json
import sys

import numpy as np

from .errors import SphereRigidityError
from .experiments import (ExperimentConfig, FAMILIES, convergence_study,
                          fmt_float, generate, map_seed, sweep)
from .grid import build_grid
from .maps import read_map, write_map
from .moebius import center_map, transform_line
from .rigidity import analyze, best_moebius, rigidity_constants


def _cmd_generate(args):
    grid = build_grid(args.ntheta, args.nphi or 2 * args.ntheta)
    u = generate(args.family, grid, args.seed, eps=args.eps, lam=args.lam,
                 lambda_range=(args.lambda_min, args.lambda_max))
    write_map(u, args.out)
    print(f"wrote {args.out}: family={args.family} eps={args.eps} "
          f"n_theta={grid.n_theta} n_phi={grid.n_phi}")
    return 0


def _cmd_analyze(args):
    u = read_map(args.input)
    report = analyze(u, theta=args.theta)
    if args.optimize and report.phi is not None:
        tightened = best_moebius(u, report.phi)
        from .maps import gradient_distance_sq
        from .moebius import as_map
        lhs_opt = gradient_distance_sq(u, as_map(tightened, u.grid))
        if report.lhs is None or lhs_opt < report.lhs:
            report.phi = tightened
            report.lhs = lhs_opt
            if report.deficit > 1e-13:
                report.ratio = lhs_opt / report.deficit
    if args.out:
        report.save(args.out)
    print(f"status={report.status} deficit={fmt_float(report.deficit)} "
          f"lhs={'-' if report.lhs is None else fmt_float(report.lhs)} "
          f"ratio={'-' if report.ratio is None else fmt_float(report.ratio)}")
    if args.out:
        print(f"wrote {args.out}")
    return 0 if report.status in ("ok", "zero-deficit") else 1


def _cmd_center(args):
    u = read_map(args.input)
    result = center_map(u, tol=args.tol)
    print("psi " + transform_line(result.psi))
    print(f"residual {fmt_float(float(np.linalg.norm(result.residual)))} "
          f"iterations {result.iterations}")
    return 0


def _cmd_sweep(args):
    config = ExperimentConfig.load(args.config)
    result = sweep(config, out_csv=args.out)
    summary = result.summary
    print(f"rows: {summary['n_rows']}")
    for family, ratio in sorted(summary["max_ratio_per_family"].items()):
        print(f"max ratio [{family}]: {fmt_float(ratio)}")
    for regime, ratio in summary["max_ratio_per_regime"].items():
        if ratio is not None:
            print(f"max ratio [{regime}]: {fmt_float(ratio)}")
    for note in summary["anomalies"]:
        print(f"anomaly: {note}")
    for note in summary["hard_errors"]:
        print(f"error: {note}")
    if args.out or config.out_csv:
        print(f"wrote {args.out or config.out_csv}")
    if summary["hard_errors"]:
        return 2
    return 1 if summary["anomalies"] else 0


def _cmd_converge(args):
    grids = [int(tok) for tok in args.grids.split(",")]
    rows, anomalies = convergence_study(
        args.family, grids, args.seed, eps=args.eps, lam=args.lam)
    print("n_theta degree_residual identity_residual deficit")
    for row in rows:
        print(f"{row.n_theta} {fmt_float(row.degree_residual)} "
              f"{fmt_float(row.identity_residual)} {fmt_float(row.deficit)}")
    for note in anomalies:
        print(f"anomaly: {note}")
    return 1 if anomalies else 0


def _cmd_constants(args):
    c1, c = rigidity_constants(args.theta)
    print(f"theta {fmt_float(args.theta)}")
    print(f"c1 {fmt_float(c1)}")
    print(f"c {fmt_float(c)}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sphere-rigidity",
        description="Desk-scale verification of the rigidity estimate for "
                    "degree-1 conformal maps of the sphere.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="build a test map and write it")
    p.add_argument("--family", required=True, choices=FAMILIES)
    p.add_argument("--eps", type=float, default=0.0)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--ntheta", type=int, required=True)
    p.add_argument("--nphi", type=int, default=None)
    p.add_argument("--lam", type=float, default=None)
    p.add_argument("--lambda-min", type=float, default=0.25)
    p.add_argument("--lambda-max", type=float, default=4.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("analyze", help="run the rigidity pipeline on a map")
    p.add_argument("--input", required=True)
    p.add_argument("--theta", type=float, default=0.1)
    p.add_argument("--out", default=None)
    p.add_argument("--optimize", action="store_true",
                   help="locally tighten the candidate transform")
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("center", help="find the mean-centering dilation")
    p.add_argument("--input", required=True)
    p.add_argument("--tol", type=float, default=1e-8)
    p.set_defaults(func=_cmd_center)

    p = sub.add_parser("sweep", help="run a sweep from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("converge", help="residuals across grid sizes")
    p.add_argument("--family", required=True, choices=FAMILIES)
    p.add_argument("--grids", required=True,
                   help="comma-separated n_theta values, e.g. 24,48,96")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("--lam", type=float, default=None)
    p.set_defaults(func=_cmd_converge)

    p = sub.add_parser("constants", help="closed-form constants for theta")
    p.add_argument("--theta", type=float, required=True)
    p.set_defaults(func=_cmd_constants)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SphereRigidityError, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
