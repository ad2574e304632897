"""Command-line entry point: ``viewsieve {select,matrix,check,synth}``.

Exit codes: 0 ok, 1 internal error, 2 bad arguments, 3 unreadable input,
4 log-determinant selection went singular, 5 property check failed.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import hashlib
import json
import math
import os
import sys
import time
from pathlib import Path

from . import __version__
from .distance import MissingFeaturesError, build_matrix
from .geometry import FrustumParams
from .model import (
    DistanceWeights,
    IngestError,
    attach_features,
    load_features,
    load_trajectory,
    normalize_positions,
    save_features,
    save_trajectory,
    synthetic_trajectory,
)
from .oracle import (
    PropertyReport,
    check_approximation,
    check_dpp_dense,
    check_monotonicity,
    check_submodularity,
    random_cf,
    random_df,
    random_dpp,
)
from .selector import NumericalSingularityError, SelectionConfig, run_selection

SCHEMA_VERSION = "viewsieve.selection/1"

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE, EXIT_INGEST, EXIT_SINGULAR, EXIT_PROPERTY = range(6)

DEFAULT_TRIALS = {"submodular": 10000, "monotone": 5000, "approx": 200, "dpp-dense": 100}
CF_SEARCH_TRIALS = 2000


class UsageError(Exception):
    pass


class PropertyFailure(Exception):
    def __init__(self, report: PropertyReport):
        self.report = report
        super().__init__(f"property check {report.name!r} failed")


def _u64(text):
    value = int(text, 0)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _add_weight_args(p):
    p.add_argument("--features", type=Path, help="feature table (JSON or VSFT binary)")
    p.add_argument("--alpha", type=float, help="position weight (default 0.7)")
    p.add_argument("--beta", type=float, help="rotation weight (default 0.2)")
    p.add_argument("--gamma", type=float,
                   help="semantic weight (default 0.1 with --features, else 0)")
    p.add_argument("--sigma", type=float, default=0.5, help="Dist3D kernel width (default 0.5)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="viewsieve", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("select", help="select a subset of frames")
    p.add_argument("--poses", type=Path, required=True, help="transforms.json or pose CSV")
    p.add_argument("--format", choices=["transforms_json", "pose_csv"], help="pose file format")
    p.add_argument("--strategy", required=True,
                   choices=["random", "uniform", "greedy-df", "greedy-dpp", "greedy-cf"])
    size = p.add_mutually_exclusive_group(required=True)
    size.add_argument("--count", type=int, help="number of frames K")
    size.add_argument("--ratio", type=float, help="fraction of frames, K = max(1, round(ratio*N))")
    _add_weight_args(p)
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--lambda", dest="lam", type=float, default=0.5, help="coverage exponent")
    p.add_argument("--grid-res", type=int, default=16, help="voxels per axis for greedy-cf")
    p.add_argument("--bins", type=int, choices=[6, 26], default=26, help="direction bins for greedy-cf")
    p.add_argument("--fov", type=float, default=90.0, help="vertical field of view in degrees")
    p.add_argument("--dpp-jitter", type=float, default=0.0, help="add EPS*I to the DPP kernel")
    p.add_argument("--out", type=Path, help="selection JSON (default: stdout)")
    p.add_argument("--csv", type=Path, help="also write rank,index,gain rows")
    p.add_argument("--plot", type=Path, help="also render a selection figure (png/pdf/svg)")

    p = sub.add_parser("matrix", help="export the affinity matrix as CSV")
    p.add_argument("--poses", type=Path, required=True)
    p.add_argument("--format", choices=["transforms_json", "pose_csv"])
    _add_weight_args(p)
    p.add_argument("--out", type=Path, help="CSV path (default: stdout)")
    p.add_argument("--plot", type=Path, help="also render a heatmap")

    p = sub.add_parser("check", help="run a property-check suite")
    p.add_argument("--suite", required=True, choices=sorted(DEFAULT_TRIALS))
    p.add_argument("--utility", choices=["df", "dpp", "cf"], default="df")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--out", type=Path, help="report JSON (default: stdout)")
    p.add_argument("--fixture", type=Path, help="write the first witness found here")

    p = sub.add_parser("synth", help="write a synthetic looping trajectory")
    p.add_argument("--frames", type=int, required=True)
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--out", type=Path, required=True, help=".json (transforms) or .csv (poses)")
    p.add_argument("--features", type=Path, help="also write a feature table")
    p.add_argument("--dim", type=int, default=16, help="feature dimension")
    return parser


# --- helpers --------------------------------------------------------------

def resolve_weights(args, have_features: bool) -> DistanceWeights:
    gamma = args.gamma if args.gamma is not None else (0.1 if have_features else 0.0)
    alpha, beta = args.alpha, args.beta
    if alpha is None and beta is None:
        if abs(gamma - 0.1) < 1e-12:
            alpha, beta = 0.7, 0.2
        else:
            alpha, beta = 0.7 / 0.9 * (1.0 - gamma), 0.2 / 0.9 * (1.0 - gamma)
    elif alpha is None:
        alpha = 1.0 - beta - gamma
    elif beta is None:
        beta = 1.0 - alpha - gamma
    try:
        weights = DistanceWeights(alpha, beta, gamma, args.sigma)
    except ValueError as exc:
        raise UsageError(f"invalid distance weights: {exc}") from None
    if weights.gamma > 0 and not have_features:
        raise UsageError(f"--gamma {weights.gamma:g} needs --features; pass a feature table or --gamma 0")
    return weights


def _load(args):
    traj = load_trajectory(args.poses, args.format)
    if args.features is not None:
        traj = attach_features(traj, load_features(args.features))
    return traj


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_text(path, text):
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _limit_threads():
    raw = os.environ.get("VIEWSIEVE_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"VIEWSIEVE_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise UsageError("VIEWSIEVE_THREADS must be >= 0")
    if n == 0:
        return None
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


# --- commands -------------------------------------------------------------

def cmd_select(args, argv) -> int:
    started = time.perf_counter()
    started_at = dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")
    traj = _load(args)
    weights = resolve_weights(args, traj.has_features)
    try:
        config = SelectionConfig(
            args.strategy, k=args.count, ratio=args.ratio, seed=args.seed, weights=weights,
            lam=args.lam, grid_res=args.grid_res,
            frustum=FrustumParams(fov_y=math.radians(args.fov)), n_bins=args.bins,
            dpp_jitter=args.dpp_jitter,
        )
        config.resolve_k(len(traj))
        if args.lam <= 0:
            raise ValueError("--lambda must be positive")
        if args.grid_res < 1:
            raise ValueError("--grid-res must be >= 1")
        if args.dpp_jitter < 0:
            raise ValueError("--dpp-jitter must be >= 0")
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    result = run_selection(traj, config)

    outputs = [str(p) for p in (args.out, args.csv, args.plot) if p is not None]
    inputs = {str(args.poses): _sha256(args.poses)}
    if args.features is not None:
        inputs[str(args.features)] = _sha256(args.features)
    doc = {
        "schema": SCHEMA_VERSION,
        "strategy": result.strategy,
        "seed": result.seed,
        "k": result.k,
        "n": len(traj),
        "params": result.params,
        "indices": result.indices,
        "gains": result.gains,
        "total_utility": result.total_utility,
        "meta": result.meta,
        "manifest": {
            "tool_version": __version__,
            "command": list(argv),
            "config": {"strategy": result.strategy, "k": result.k, "seed": result.seed,
                       "poses_format": args.format, **result.params},
            "inputs": inputs,
            "outputs": outputs,
            "started_at": started_at,
            "duration_s": None,
        },
    }
    if args.csv is not None:
        with args.csv.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["rank", "index", "gain"])
            for r, idx in enumerate(result.indices):
                w.writerow([r, idx, repr(result.gains[r]) if result.gains else ""])
    if args.plot is not None:
        from .plotting import plot_selection
        plot_selection(normalize_positions(traj), result, args.plot)
    doc["manifest"]["duration_s"] = round(time.perf_counter() - started, 6)
    _write_text(args.out, json.dumps(doc, indent=2) + "\n")

    total = "n/a" if result.total_utility is None else f"{result.total_utility:.6f}"
    msg = f"selected {len(result.indices)} of {len(traj)} frames ({result.strategy}); total utility {total}\n"
    (sys.stderr if args.out is None else sys.stdout).write(msg)
    return EXIT_OK


def cmd_matrix(args, argv) -> int:
    traj = _load(args)
    weights = resolve_weights(args, traj.has_features)
    try:
        matrix = build_matrix(normalize_positions(traj), weights)
    except MissingFeaturesError as exc:
        raise UsageError(str(exc)) from None
    _write_text(args.out, matrix.to_csv())
    if args.plot is not None:
        from .plotting import plot_matrix
        plot_matrix(matrix.entries, args.plot)
    return EXIT_OK


def run_check(suite: str, utility: str, trials: int, seed: int) -> PropertyReport:
    """Run one suite and annotate the report with its expectation and verdict."""
    makers = {"df": random_df, "dpp": random_dpp, "cf": random_cf}
    if suite == "approx":
        report = check_approximation(trials, seed)
        expect, passed = "no instance below (1-1/e)*OPT", report.ok
    elif suite == "dpp-dense":
        report = check_dpp_dense(trials, seed)
        expect, passed = "incremental log-det equals dense; gains non-increasing", report.ok
    elif suite == "submodular":
        report = check_submodularity(makers[utility], trials, seed, name=f"submodular-{utility}")
        if utility == "cf":
            expect, passed = "at least one diminishing-returns violation", report.violation_count > 0
        else:
            expect, passed = "no violations", report.ok
    elif suite == "monotone":
        report = check_monotonicity(makers[utility], trials, seed, name=f"monotone-{utility}")
        if utility == "dpp":
            expect, passed = "violations documented (log-det is not monotone)", True
        else:
            expect, passed = "no violations", report.ok
    else:
        raise UsageError(f"unknown suite {suite!r}")
    report.details.update({"expectation": expect, "passed": passed, "trials": trials, "seed": seed})
    return report


def cmd_check(args, argv) -> int:
    if args.trials is not None and args.trials < 1:
        raise UsageError("--trials must be >= 1")
    trials = args.trials
    if trials is None:
        trials = CF_SEARCH_TRIALS if (args.suite == "submodular" and args.utility == "cf") else DEFAULT_TRIALS[args.suite]
    report = run_check(args.suite, args.utility, trials, args.seed)
    _write_text(args.out, report.to_json() + "\n")
    if args.fixture is not None and report.violations:
        args.fixture.write_text(json.dumps(report.violations[0], indent=2) + "\n", encoding="utf-8")
    sys.stderr.write(
        f"{report.name}: {report.instances} instances, {report.violation_count} violations "
        f"-> {'PASS' if report.details['passed'] else 'FAIL'}\n"
    )
    if not report.details["passed"]:
        raise PropertyFailure(report)
    return EXIT_OK


def cmd_synth(args, argv) -> int:
    if args.frames < 1:
        raise UsageError("--frames must be >= 1")
    traj = synthetic_trajectory(args.frames, args.seed, args.dim if args.features else None)
    save_trajectory(traj, args.out)
    if args.features is not None:
        table = {v.id: v.feature for v in traj.views}
        save_features(table, args.features, binary=args.features.suffix.lower() in (".bin", ".vsft"))
    return EXIT_OK


COMMANDS = {"select": cmd_select, "matrix": cmd_matrix, "check": cmd_check, "synth": cmd_synth}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        limiter = _limit_threads()
        try:
            return COMMANDS[args.command](args, argv)
        finally:
            if limiter is not None:
                limiter.restore_original_limits()
    except UsageError as exc:
        sys.stderr.write(f"viewsieve: error: {exc}\n")
        return EXIT_USAGE
    except IngestError as exc:
        sys.stderr.write(f"viewsieve: input error: {exc}\n")
        return EXIT_INGEST
    except NumericalSingularityError as exc:
        sys.stderr.write(f"viewsieve: numerical singularity: {exc}\n")
        return EXIT_SINGULAR
    except PropertyFailure as exc:
        sys.stderr.write(f"viewsieve: {exc}\n")
        return EXIT_PROPERTY
    except Exception as exc:  # noqa: BLE001
        sys.stderr.write(f"viewsieve: internal error: {type(exc).__name__}: {exc}\n")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
