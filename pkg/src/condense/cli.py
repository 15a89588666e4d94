"""Command-line pipeline: reduce, fit, eval, simulate.

Every command writes its resolved configuration and seed into its output
artifacts; re-running with the same configuration reproduces outputs
bit-for-bit apart from timing fields.

Exit codes: 0 success, 1 validation error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
import warnings

import numpy as np

from . import __version__
from .data import read_dataset_csv, write_dataset_csv
from .density import (BasisConfig, ClampWarning, evaluation_table, fit,
                      model_from_json, model_to_json)
from .errors import DomainError, NumericalError
from .experiments import (ExperimentConfig, model_crps, reduce_dataset,
                          run_experiment)
from .metrics import energy_distance_empirical, gauss_legendre_rule, skl
from .reduction import read_reduced_csv, write_reduced_csv
from .simgen import CASE_IDS, CaseSpec, generate, train_test_split, truth_crps
from .support_points import SpConfig

SIM_COLUMNS = ["case", "method", "n", "rep", "seed", "alloc", "strategy",
               "crps", "log10_n", "log10_crps", "lambda",
               "reduce_seconds", "fit_seconds", "eval_seconds"]


def _split_cols(text: str) -> list[str]:
    cols = [c.strip() for c in text.split(",") if c.strip()]
    if not cols:
        raise DomainError("expected a comma-separated column list")
    return cols


def _write_json(path, doc) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _default_threads() -> int:
    return max(1, os.cpu_count() or 1)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_reduce(args) -> int:
    x_cols = _split_cols(args.x)
    dataset, rejected = read_dataset_csv(args.input, x_cols, args.y)
    if rejected:
        print(f"rejected {len(rejected)} rows with missing/non-finite cells: "
              f"{rejected[:20]}{'...' if len(rejected) > 20 else ''}", file=sys.stderr)
    t0 = time.perf_counter()
    reduced = reduce_dataset(
        dataset, args.method, args.n, args.seed, strategy=args.strategy,
        alloc_mode=args.alloc, K_target=args.k_target, threads=args.threads,
        sp_cfg=SpConfig(seed=args.seed, tol=args.sp_tol, max_iters=args.sp_max_iters))
    elapsed = time.perf_counter() - t0
    write_reduced_csv(args.out, reduced)
    prov = {
        "command": "reduce",
        "config": {
            "input": str(args.input), "x": x_cols, "y": args.y,
            "method": args.method, "n": args.n, "strategy": args.strategy,
            "alloc": args.alloc, "k_target": args.k_target, "seed": args.seed,
            "threads": args.threads, "sp_tol": args.sp_tol,
            "sp_max_iters": args.sp_max_iters,
        },
        "rejected_rows": rejected,
        "seconds": elapsed,
        "provenance": _jsonable(reduced.provenance),
    }
    if args.provenance:
        _write_json(args.provenance, prov)
    print(f"wrote {reduced.n} rows to {args.out}")
    return 0


def _conditional_l2_vs_truth(model, oracle, test, max_rows: int = 200) -> float:
    """Mean over test covariates of the squared L2 gap between the fitted and
    true conditional CDFs, on the shared evaluation grid."""
    from .experiments import evaluation_grid
    rows = min(max_rows, test.n_rows)
    grid = evaluation_grid(model, test.y)
    F_hat = model.cdf_on_grid(test.X[:rows], grid)
    F_true = np.array([oracle.cond_cdf(test.X[i], grid) for i in range(rows)])
    return float(np.mean(np.trapezoid((F_hat - F_true) ** 2, grid, axis=1)))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer, np.floating)):
        return obj.item()
    return obj


def cmd_fit(args) -> int:
    x_cols = _split_cols(args.x)
    reduced = read_reduced_csv(args.input, x_cols, args.y)
    lam = args.lam
    lam_grid = None
    if lam is None:
        lam_grid = ([float(v) for v in _split_cols(args.lambda_grid)]
                    if args.lambda_grid else None)
    x_ranges = None
    if args.provenance:
        with open(args.provenance, encoding="utf-8") as fh:
            prov = json.load(fh)
        ranges = prov.get("provenance", {}).get("x_ranges_full")
        if ranges is not None:
            x_ranges = [tuple(r) for r in ranges]
    terms = None
    if args.terms:
        # "0;1;0,1" -> ((0,), (1,), (0, 1)); dims are 0-based covariate indices
        try:
            terms = tuple(tuple(int(d) for d in t.split(",")) for t in args.terms.split(";") if t)
        except ValueError as exc:
            raise DomainError(f"bad --terms value {args.terms!r}") from exc
    cfg = BasisConfig(y_knots=args.y_knots, x_knots_per_dim=args.x_knots,
                      included_terms=terms)
    model, report = fit(reduced.X, reduced.y, cfg=cfg, lam=lam, lam_grid=lam_grid,
                        mode=args.mode, seed=args.seed, max_iter=args.max_iter,
                        x_names=x_cols, x_ranges=x_ranges)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(model_to_json(model))
    if args.report:
        _write_json(args.report, {
            "command": "fit",
            "config": {"input": str(args.input), "x": x_cols, "y": args.y,
                       "mode": args.mode, "lambda": lam,
                       "lambda_grid": lam_grid, "seed": args.seed,
                       "y_knots": args.y_knots, "x_knots": args.x_knots},
            "criterion_value": report.criterion_value,
            "grad_norm": report.grad_norm,
            "iterations": report.iterations,
            "converged": report.converged,
            "lambda": report.lam,
            "validation_crps": report.validation_crps,
        })
    print(f"fitted {args.mode} model (lambda={report.lam:g}) -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    t0 = time.perf_counter()
    x_cols = _split_cols(args.x)
    with open(args.model, encoding="utf-8") as fh:
        model = model_from_json(fh.read())
    test, rejected = read_dataset_csv(args.test, x_cols, args.y)
    crps_mean, per_obs = model_crps(model, test.X, test.y)
    report = {
        "command": "eval",
        "config": {"model": str(args.model), "test": str(args.test),
                   "x": x_cols, "y": args.y, "seed": args.seed},
        "n_test": test.n_rows,
        "rejected_rows": rejected,
        "crps_mean": crps_mean,
    }
    if args.reduced:
        reduced = read_reduced_csv(args.reduced, x_cols, args.y)
        report["energy_distance_joint"] = energy_distance_empirical(
            np.column_stack([reduced.X, reduced.y]),
            np.column_stack([test.X, test.y]))
    if args.case:
        _, oracle = generate(CaseSpec(case_id=args.case, N=1, seed=args.seed))
        report["truth_crps"] = truth_crps(oracle, test.X, test.y)
        with warnings.catch_warnings():
            # test covariates routinely sit outside the reduced set's hull
            warnings.simplefilter("ignore", ClampWarning)
            report["conditional_l2_sq"] = _conditional_l2_vs_truth(model, oracle, test)
            if oracle.bounded_01:
                quad = gauss_legendre_rule(max(model.y_lo, 1e-9),
                                           min(model.y_hi, 1 - 1e-9), 64)
            else:
                quad = gauss_legendre_rule(model.y_lo, model.y_hi, 64)
            try:
                report["skl"] = skl(
                    lambda x: (lambda z: np.maximum(model.cond_density(x, z), 1e-300)),
                    oracle.density_family(), list(test.X[:min(100, test.n_rows)]), quad)
            except DomainError as exc:
                report["skl_error"] = str(exc)
    report["seconds"] = time.perf_counter() - t0
    _write_json(args.out, report)
    if args.per_obs:
        with open(args.per_obs, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["row", "crps"])
            for i, v in enumerate(per_obs):
                writer.writerow([i, repr(float(v))])
    if args.grid_csv:
        from .experiments import evaluation_grid
        grid = evaluation_grid(model, test.y)[::4]  # ~256 plot points suffice
        rows_out = evaluation_table(model, test.X[:args.grid_x_rows], grid)
        with open(args.grid_csv, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["row", *x_cols, args.y, "density", "cdf"])
            for row in rows_out:
                writer.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
    print(f"mean CRPS {crps_mean:.6g} over {test.n_rows} rows -> {args.out}")
    return 0


def cmd_simulate(args) -> int:
    from .experiments import SWEEP_LAMBDA_GRID
    methods = tuple(_split_cols(args.methods))
    n_grid = tuple(int(v) for v in _split_cols(args.n_grid))
    lam_grid = (tuple(float(v) for v in _split_cols(args.lambda_grid))
                if args.lambda_grid else SWEEP_LAMBDA_GRID)
    cfg = ExperimentConfig(
        case=args.case, N=args.N, n_grid=n_grid, methods=methods,
        reps=args.reps, seed=args.seed, alloc_mode=args.alloc,
        strategy=args.strategy, fit_mode=args.mode, lam=args.lam,
        lam_grid=lam_grid, threads=args.threads)
    progress = None
    if args.verbose:
        progress = lambda row: print(
            f"  case={row['case']} method={row['method']} n={row['n']} "
            f"rep={row['rep']} crps={row['crps']:.5f}", file=sys.stderr)
    rows = run_experiment(cfg, progress=progress)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=SIM_COLUMNS, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    print(f"wrote {len(rows)} result rows to {args.out}")
    return 0


def cmd_generate(args) -> int:
    dataset, _ = generate(CaseSpec(case_id=args.case, N=args.N, seed=args.seed))
    if args.split_test:
        train, test = train_test_split(dataset, test_frac=args.test_frac,
                                       seed=args.seed)
        write_dataset_csv(args.out, train)
        write_dataset_csv(args.split_test, test)
        print(f"wrote {train.n_rows} train rows to {args.out}, "
              f"{test.n_rows} test rows to {args.split_test}")
    else:
        write_dataset_csv(args.out, dataset)
        print(f"wrote {dataset.n_rows} rows to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="condense",
        description="Data reduction and conditional density estimation pipeline.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("reduce", help="compact a CSV dataset to n representative pairs")
    r.add_argument("--input", required=True)
    r.add_argument("--x", required=True, help="comma-separated covariate columns")
    r.add_argument("--y", required=True, help="response column")
    r.add_argument("--method", default="csp",
                   choices=["csp", "mcsp", "uniform", "vanilla_sp"])
    r.add_argument("--n", type=int, required=True)
    r.add_argument("--strategy", default="bins",
                   choices=["bins", "voronoi_kmeans", "voronoi_sp"])
    r.add_argument("--alloc", default="proportional", choices=["proportional", "equal"])
    r.add_argument("--k-target", type=int, default=None,
                   help="cell count (default: n^(3/5))")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--threads", type=int, default=_default_threads())
    r.add_argument("--sp-tol", type=float, default=1e-8)
    r.add_argument("--sp-max-iters", type=int, default=500)
    r.add_argument("--out", required=True)
    r.add_argument("--provenance", default=None, help="provenance JSON path")
    r.set_defaults(func=cmd_reduce)

    f = sub.add_parser("fit", help="fit a conditional density on a reduced CSV")
    f.add_argument("--input", required=True, help="reduced CSV from `reduce`")
    f.add_argument("--x", required=True)
    f.add_argument("--y", required=True)
    f.add_argument("--provenance", default=None,
                   help="provenance JSON from `reduce`; widens the covariate "
                        "box to the source data's ranges")
    f.add_argument("--mode", default="likelihood", choices=["likelihood", "pseudo"])
    f.add_argument("--lam", type=float, default=None,
                   help="penalty weight; omit to select on a grid")
    f.add_argument("--lambda-grid", default=None,
                   help="comma-separated candidate penalty weights")
    f.add_argument("--y-knots", type=int, default=12)
    f.add_argument("--x-knots", type=int, default=6)
    f.add_argument("--terms", default=None,
                   help="response-interaction terms as 0-based covariate index "
                        "groups, e.g. '0;1;2;0,1' (default: one per covariate)")
    f.add_argument("--max-iter", type=int, default=200)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--out", required=True, help="model JSON path")
    f.add_argument("--report", default=None, help="fit report JSON path")
    f.set_defaults(func=cmd_fit)

    e = sub.add_parser("eval", help="score a fitted model on a test CSV")
    e.add_argument("--model", required=True)
    e.add_argument("--test", required=True)
    e.add_argument("--x", required=True)
    e.add_argument("--y", required=True)
    e.add_argument("--reduced", default=None,
                   help="reduced CSV; adds the joint energy distance to the report")
    e.add_argument("--case", default=None, choices=list(CASE_IDS),
                   help="known simulation truth; adds truth CRPS and SKL")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", required=True, help="report JSON path")
    e.add_argument("--per-obs", default=None, help="per-observation CRPS CSV path")
    e.add_argument("--grid-csv", default=None,
                   help="density/CDF evaluation grid CSV for plotting")
    e.add_argument("--grid-x-rows", type=int, default=5,
                   help="how many test covariates to tabulate in --grid-csv")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("simulate", help="run a reduce+fit+eval sweep on a simulation case")
    s.add_argument("--case", required=True, choices=list(CASE_IDS))
    s.add_argument("--N", type=int, default=20000)
    s.add_argument("--n-grid", default="500")
    s.add_argument("--methods", default="csp,mcsp,uniform,vanilla_sp")
    s.add_argument("--reps", type=int, default=5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--alloc", default="proportional", choices=["proportional", "equal"])
    s.add_argument("--strategy", default="bins",
                   choices=["bins", "voronoi_kmeans", "voronoi_sp"])
    s.add_argument("--mode", default="likelihood", choices=["likelihood", "pseudo"])
    s.add_argument("--lam", type=float, default=None)
    s.add_argument("--lambda-grid", default=None)
    s.add_argument("--threads", type=int, default=_default_threads())
    s.add_argument("--verbose", action="store_true")
    s.add_argument("--out", required=True, help="tidy results CSV path")
    s.set_defaults(func=cmd_simulate)

    g = sub.add_parser("generate", help="write a simulation case dataset to CSV")
    g.add_argument("--case", required=True, choices=list(CASE_IDS))
    g.add_argument("--N", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--split-test", default=None,
                   help="also write a held-out test CSV (95/5 split)")
    g.add_argument("--test-frac", type=float, default=0.05)
    g.set_defaults(func=cmd_generate)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DomainError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
