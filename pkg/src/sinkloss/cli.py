"""Command-line front end: batched transport costs, gradient checking and
forward/backward benchmarking.

Reports are UTF-8 JSON with a "schema": 1 field. Exit codes: 0 success,
1 validation or parse failure, 2 non-convergence under a nonzero
tolerance, 3 gradcheck failure.
"""

from __future__ import annotations

import argparse
import json
import math
import statistics
import sys
import time

import numpy as np

from .batch import HistogramBatch, batch_backward, batch_forward
from .core import (
    CostMatrix,
    SinkhornConfig,
    gradients,
    run_sinkhorn,
    transport_plan,
    validate_histogram,
)
from .errors import SinklossError
from .fileio import InputFormatError, is_json_file, load_json_document, load_matrix
from .oracle import finite_difference_gradient, index_grid_cost, random_histogram

SCHEMA_VERSION = 1

GRADCHECK_REL_TOL = 1e-3
GRADCHECK_ABS_TOL = 1e-5

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NOT_CONVERGED = 2
EXIT_GRADCHECK = 3


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lambda", dest="lam", type=float, required=True,
                   help="entropy regularisation weight")
    p.add_argument("--max-iters", type=int, default=1000)
    p.add_argument("--tol", type=float, default=1e-9,
                   help="marginal-residual stopping threshold; 0 disables early stop")
    p.add_argument("--check-interval", type=int, default=10)
    p.add_argument("--workers", type=int, default=None,
                   help="reduction worker count (default: hardware parallelism)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=str, default=None, help="report path (default: stdout)")


def _add_cost_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--cost", type=str, default=None, help="cost matrix file (CSV or JSON)")
    p.add_argument("--grid-metric", type=int, default=None, choices=(1, 2),
                   metavar="P", help="generate |i-j|^P/(d-1)^P instead of reading --cost")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sinkloss",
        description="Entropy-regularised transport costs between histogram batches",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    compute = sub.add_parser("compute", help="costs (and optionally plans/gradients) from files")
    _add_solver_flags(compute)
    _add_cost_flags(compute)
    compute.add_argument("--mu", type=str, required=True, help="mu batch file (CSV rows or JSON)")
    compute.add_argument("--nu", type=str, default=None,
                         help="nu batch file; optional when --mu is a JSON bundle")
    compute.add_argument("--emit-plan", action="store_true")
    compute.add_argument("--emit-gradients", action="store_true")
    compute.add_argument("--emit-potentials", action="store_true",
                         help="include per-lane log potentials in the report")

    gradcheck = sub.add_parser("gradcheck", help="analytic vs finite-difference gradients")
    _add_solver_flags(gradcheck)
    _add_cost_flags(gradcheck)
    gradcheck.add_argument("--mu", type=str, default=None)
    gradcheck.add_argument("--nu", type=str, default=None)
    gradcheck.add_argument("--random", type=int, default=None, metavar="D",
                           help="use a seeded random instance of dimension D")

    bench = sub.add_parser("bench", help="time batch_forward / batch_backward")
    _add_solver_flags(bench)
    bench.add_argument("--batch", type=int, default=32)
    bench.add_argument("--random", type=int, default=100, metavar="D",
                       help="histogram dimension")

    return parser


def _fail(message: str) -> int:
    print(f"sinkloss: error: {message}", file=sys.stderr)
    return EXIT_VALIDATION


def _jsonable(x):
    """Make report values JSON-safe; -inf potentials become null."""
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


def _write_report(report: dict, out: str | None) -> None:
    text = json.dumps(_jsonable(report), indent=2, sort_keys=True)
    if out is None:
        print(text)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")


def _config_from(args) -> SinkhornConfig:
    return SinkhornConfig(
        lam=args.lam,
        max_iters=args.max_iters,
        tolerance=args.tol,
        check_interval=args.check_interval,
    )


def _validated_batch(path: str, arr: np.ndarray) -> HistogramBatch:
    for b in range(arr.shape[0]):
        try:
            validate_histogram(arr[b])
        except SinklossError as err:
            col = getattr(err, "index", None)
            where = f"row {b}" + (f", column {col}" if col is not None else "")
            raise InputFormatError(path, f"{where}: {err}") from None
    return HistogramBatch(mass=arr)


def _load_compute_inputs(args):
    mu_doc = load_json_document(args.mu) if is_json_file(args.mu) else None
    if mu_doc is not None and "mu" in mu_doc:
        mu_arr = mu_doc["mu"]
        nu_arr = mu_doc.get("nu")
        cost_arr = mu_doc.get("cost")
    else:
        mu_arr = load_matrix(args.mu, key="mu")
        nu_arr = None
        cost_arr = None

    if args.nu is not None:
        nu_arr = load_matrix(args.nu, key="nu")
    if nu_arr is None:
        raise InputFormatError(args.mu, "no nu histograms: pass --nu or a JSON bundle")

    if args.cost is not None and args.grid_metric is not None:
        raise InputFormatError(args.cost, "pass exactly one of --cost / --grid-metric")
    if args.cost is not None:
        cost_arr = load_matrix(args.cost, key="cost")
    elif args.grid_metric is not None:
        cost_arr = None  # generated below once dims are known
    elif cost_arr is None:
        raise InputFormatError(args.mu, "no cost source: pass --cost or --grid-metric")

    if mu_arr.shape[0] != nu_arr.shape[0]:
        raise InputFormatError(
            args.mu,
            f"mu has {mu_arr.shape[0]} rows but nu has {nu_arr.shape[0]} rows",
        )

    mu = _validated_batch(args.mu, mu_arr)
    nu = _validated_batch(args.nu or args.mu, nu_arr)
    if cost_arr is None:
        cost = index_grid_cost(mu.d, nu.d, power=args.grid_metric)
    else:
        cost = CostMatrix(cost=cost_arr)
    return mu, nu, cost


def cmd_compute(args) -> int:
    mu, nu, cost = _load_compute_inputs(args)
    config = _config_from(args)
    result = batch_forward(mu, nu, cost, config, workers=args.workers)

    converged = (
        (result.residuals <= config.tolerance).tolist()
        if config.tolerance > 0
        else [False] * result.batch_size
    )
    report = {
        "schema": SCHEMA_VERSION,
        "lambda": config.lam,
        "max_iters": config.max_iters,
        "tolerance": config.tolerance,
        "cost_e0": result.cost_e0,
        "iterations_run": result.iterations_run,
        "residuals": result.residuals,
        "converged": converged,
    }
    if args.emit_plan:
        report["plans"] = [
            transport_plan(result.lane_potentials(b), cost).p
            for b in range(result.batch_size)
        ]
    if args.emit_gradients:
        grad_mu, grad_nu = batch_backward(result, np.ones(result.batch_size))
        report["gradients"] = {"mu": grad_mu, "nu": grad_nu}
    if args.emit_potentials:
        report["potentials"] = {"log_u": result.log_u, "log_v": result.log_v}

    _write_report(report, args.out)
    if config.tolerance > 0 and not all(converged):
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _gradcheck_instance(args):
    if args.random is not None:
        rng = np.random.default_rng(args.seed)
        mu = random_histogram(args.random, rng)
        nu = random_histogram(args.random, rng)
        power = args.grid_metric if args.grid_metric is not None else 2
        cost = index_grid_cost(args.random, args.random, power=power)
        return mu, nu, cost
    if args.mu is None or args.nu is None:
        raise InputFormatError("<args>", "gradcheck needs --random D or --mu/--nu files")
    mu_arr = load_matrix(args.mu, key="mu")
    nu_arr = load_matrix(args.nu, key="nu")
    if mu_arr.shape[0] != 1 or nu_arr.shape[0] != 1:
        raise InputFormatError(args.mu, "gradcheck expects a single histogram per file")
    mu = validate_histogram(mu_arr[0])
    nu = validate_histogram(nu_arr[0])
    if args.cost is not None:
        cost = CostMatrix(cost=load_matrix(args.cost, key="cost"))
    else:
        power = args.grid_metric if args.grid_metric is not None else 2
        cost = index_grid_cost(mu.d, nu.d, power=power)
    return mu, nu, cost


def cmd_gradcheck(args) -> int:
    mu, nu, cost = _gradcheck_instance(args)
    config = _config_from(args)

    analytic = gradients(run_sinkhorn(mu, nu, cost, config).potentials)
    numeric = finite_difference_gradient(mu, nu, cost, config, workers=args.workers)

    def errs(a: np.ndarray, f: np.ndarray) -> tuple[float, float]:
        abs_err = float(np.abs(a - f).max())
        scale = float(np.abs(f).max())
        rel_err = abs_err / scale if scale > 0 else math.inf
        return abs_err, rel_err

    abs_mu, rel_mu = errs(analytic.grad_mu, numeric.grad_mu)
    abs_nu, rel_nu = errs(analytic.grad_nu, numeric.grad_nu)
    passed = (
        max(rel_mu, rel_nu) <= GRADCHECK_REL_TOL
        and max(abs_mu, abs_nu) <= GRADCHECK_ABS_TOL
    )
    report = {
        "schema": SCHEMA_VERSION,
        "lambda": config.lam,
        "max_iters": config.max_iters,
        "seed": args.seed,
        "d1": mu.d,
        "d2": nu.d,
        "max_abs_error": {"mu": abs_mu, "nu": abs_nu},
        "max_rel_error": {"mu": rel_mu, "nu": rel_nu},
        "rel_tolerance": GRADCHECK_REL_TOL,
        "abs_tolerance": GRADCHECK_ABS_TOL,
        "passed": passed,
    }
    _write_report(report, args.out)
    return EXIT_OK if passed else EXIT_GRADCHECK


def cmd_bench(args) -> int:
    rng = np.random.default_rng(args.seed)
    d = args.random
    mu = HistogramBatch(np.stack([random_histogram(d, rng).mass for _ in range(args.batch)]))
    nu = HistogramBatch(np.stack([random_histogram(d, rng).mass for _ in range(args.batch)]))
    cost = index_grid_cost(d, d, power=2)
    # fixed iteration count for stable timing
    config = SinkhornConfig(
        lam=args.lam, max_iters=args.max_iters, tolerance=0.0,
        check_interval=args.check_interval,
    )

    warmup, reps = 5, 20
    for _ in range(warmup):
        result = batch_forward(mu, nu, cost, config, workers=args.workers)
    fwd_times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        result = batch_forward(mu, nu, cost, config, workers=args.workers)
        fwd_times.append(time.perf_counter() - t0)

    upstream = np.ones(args.batch)
    for _ in range(warmup):
        batch_backward(result, upstream)
    bwd_times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        batch_backward(result, upstream)
        bwd_times.append(time.perf_counter() - t0)

    # determinism cross-check, not timed
    single = batch_forward(mu, nu, cost, config, workers=1)
    max_dev = float(np.abs(single.cost_e0 - result.cost_e0).max())

    def summary(ts):
        qs = statistics.quantiles(ts, n=4)
        return {"median_s": statistics.median(ts), "iqr_s": qs[2] - qs[0]}

    fwd, bwd = summary(fwd_times), summary(bwd_times)
    report = {
        "schema": SCHEMA_VERSION,
        "batch": args.batch,
        "d1": d,
        "d2": d,
        "iterations": args.max_iters,
        "lambda": args.lam,
        "forward": fwd,
        "backward": bwd,
        "ratio": bwd["median_s"] / fwd["median_s"],
        "worker_determinism_max_dev": max_dev,
        "cost_e0": result.cost_e0,
    }
    _write_report(report, args.out)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"compute": cmd_compute, "gradcheck": cmd_gradcheck, "bench": cmd_bench}
    try:
        return handlers[args.subcommand](args)
    except (SinklossError, OSError, ValueError) as err:
        return _fail(str(err))


if __name__ == "__main__":
    sys.exit(main())
