"""Command-line front end: ``bmv <command> [options]``.

Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 verification failed.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time

from .branches import branch_points
from .errors import BmvError, NumericalError, ValidationError
from .instances import dump_instance, load_instance, random_instance
from .linalg import validate_pair, trace_exp
from .measure import BmvMeasure, Construction, build_measure, perturb_B
from .verify import (
    DEFAULT_T_GRID,
    PROOF_TS,
    LineOracle,
    VerifyTolerances,
    default_probes,
    laplace_of_measure,
    proof_identity_check,
    verify,
)

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_FAILED = 0, 2, 3, 4


def _float_list(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _non_negative(text: str) -> float:
    v = float(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be > 0")
    return v


def _radius_factor(text: str) -> float:
    v = float(text)
    if v < 1.5:
        raise argparse.ArgumentTypeError("must be >= 1.5")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bmv", description="Construct and verify the representing measure of Tr exp(A - tB).")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("input", help="instance JSON file")
    common.add_argument("-o", "--output", help="output file (default: stdout)")
    common.add_argument("--epsilon", type=_non_negative, default=0.0, help="regularize B by epsilon*diag(1..n)")
    common.add_argument("--radius-factor", type=_radius_factor, default=1.5)
    common.add_argument("--nodes-per-interval", type=int, default=32)
    common.add_argument("--contour-nodes", type=int, default=256)
    common.add_argument("--t-grid", type=_float_list, default=list(DEFAULT_T_GRID))
    common.add_argument("--no-timing", action="store_true", help="omit wall-clock fields")

    sub.add_parser("inspect", parents=[common], help="validation flags, b_j and a_jj")

    gen = sub.add_parser("gen", help="write a seeded random instance")
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--commuting", action="store_true")
    gen.add_argument("-o", "--output")

    sub.add_parser("branch-points", parents=[common], help="discriminant zeros and their monodromy class")

    build = sub.add_parser("build", parents=[common], help="measure JSON and density CSV")
    build.add_argument("--csv", help="also write the density as CSV here")

    ver = sub.add_parser("verify", parents=[common], help="verification report; exit 0 iff it passes")
    ver.add_argument("--measure", help="verify this measure JSON instead of building one")
    for name, default in vars(VerifyTolerances()).items():
        ver.add_argument(f"--tol-{name.replace('_', '-')}", dest=f"tol_{name}", type=_positive, default=default)

    orc = sub.add_parser("oracle", parents=[common], help="density from the inverse Laplace transform, as CSV")
    orc.add_argument("--s", type=_float_list, help="evaluation points (default: 5 interior probes)")

    plot = sub.add_parser("plot-data", parents=[common], help="CSV tables for plotting")
    plot.add_argument("--density-output", help="(s, omega) CSV; the (t, f, L) table goes to --output")

    proof = sub.add_parser("proof-check", parents=[common], help="residue identity residuals")
    proof.add_argument("--t", type=_float_list, default=list(PROOF_TS), help="pole locations")
    return parser


def _emit(text: str, path: str | None):
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, allow_nan=True) + "\n"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def _load_pair(args):
    A, B = load_instance(args.input)
    pair = validate_pair(A, B)
    if args.epsilon > 0:
        pair = perturb_B(pair, args.epsilon)
    return pair


def _construction(pair, args):
    return None if pair.commuting else Construction(pair, args.radius_factor, args.contour_nodes)


def _build(pair, args, cons=None):
    return build_measure(
        pair,
        nodes_per_interval=args.nodes_per_interval,
        radius_factor=args.radius_factor,
        contour_nodes=args.contour_nodes,
        epsilon=args.epsilon,
        construction=cons,
    )


def cmd_inspect(args):
    pair = _load_pair(args)
    info = {
        "n": pair.n,
        "b": pair.B_eigs.tolist(),
        "a_diag": pair.a_diag.tolist(),
        "commuting": bool(pair.commuting),
        "distinct_b": bool(pair.distinct_b),
        "positive_b": bool(pair.positive_b),
        "epsilon": args.epsilon,
    }
    _emit(_json(info), args.output)
    return EXIT_OK


def cmd_gen(args):
    if args.n < 1:
        raise ValidationError("--n must be positive")
    A, B = random_instance(args.seed, args.n, args.commuting)
    _emit(dump_instance(A, B), args.output)
    return EXIT_OK


def cmd_branch_points(args):
    pair = _load_pair(args)
    _emit(_json([bp.to_json() for bp in branch_points(pair)]), args.output)
    return EXIT_OK


def cmd_build(args):
    pair = _load_pair(args)
    start = time.perf_counter()
    measure = _build(pair, args, _construction(pair, args))
    data = measure.to_json()
    if not args.no_timing:
        data["meta"] = dict(data["meta"], seconds=time.perf_counter() - start)
    _emit(_json(data), args.output)
    if args.csv:
        _emit(measure.density_csv(), args.csv)
    return EXIT_OK


def cmd_verify(args):
    pair = _load_pair(args)
    start = time.perf_counter()
    cons = _construction(pair, args)
    if args.measure:
        with open(args.measure, encoding="utf-8") as fh:
            try:
                measure = BmvMeasure.from_json(json.load(fh))
            except (KeyError, TypeError, ValueError) as exc:
                raise ValidationError(f"{args.measure}: malformed measure JSON ({exc})") from exc
    else:
        measure = _build(pair, args, cons)
    tol = VerifyTolerances(**{k: getattr(args, f"tol_{k}") for k in vars(VerifyTolerances())})
    report = verify(pair, measure, t_grid=args.t_grid, tolerances=tol, construction=cons)
    data = report.to_json()
    if not args.no_timing:
        data["timing"] = {"seconds": time.perf_counter() - start}
    _emit(_json(data), args.output)
    if report.errors:
        print(f"numerical failure during verification: {'; '.join(report.errors)}", file=sys.stderr)
        return EXIT_NUMERIC
    if not report.passed:
        failed = sorted(k for k, v in report.flags.items() if not v)
        print(f"verification failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


def cmd_oracle(args):
    pair = _load_pair(args)
    points = args.s if args.s is not None else default_probes(pair)
    orc = LineOracle(pair)
    _emit(_csv(["s", "omega_oracle"], [(s, orc(s)[0]) for s in points]), args.output)
    return EXIT_OK


def cmd_plot_data(args):
    pair = _load_pair(args)
    measure = _build(pair, args, _construction(pair, args))
    rows = [(t, trace_exp(pair, t).real, laplace_of_measure(measure, t)) for t in args.t_grid]
    _emit(_csv(["t", "f", "L"], rows), args.output)
    if args.density_output:
        _emit(measure.density_csv(), args.density_output)
    return EXIT_OK


def cmd_proof_check(args):
    pair = _load_pair(args)
    cons = _construction(pair, args)
    bps = cons.branch_points if cons else []
    results = [proof_identity_check(pair, t, branch_pts=bps).to_json() for t in args.t]
    _emit(_json(results), args.output)
    return EXIT_OK


COMMANDS = {
    "inspect": cmd_inspect,
    "gen": cmd_gen,
    "branch-points": cmd_branch_points,
    "build": cmd_build,
    "verify": cmd_verify,
    "oracle": cmd_oracle,
    "plot-data": cmd_plot_data,
    "proof-check": cmd_proof_check,
}


def main(argv=None) -> int:
    level = os.environ.get("BMV_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ValidationError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except BmvError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
