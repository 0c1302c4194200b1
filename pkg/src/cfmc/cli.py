"""Command-line front end.

Three subcommands:

* ``cfmc estimate`` runs one estimator on a sample file (columns
  ``x_1..x_d, f, u_1..u_d``) and prints the result as text or JSON.
* ``cfmc bench`` runs a replicated convergence study from a JSON config
  (a bundled config name like ``paper_d1`` also works) and writes CSV and
  JSON reports.
* ``cfmc diagnose`` prints numerical health checks for a built-in target.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import re
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from . import diagnostics
from .baselines import arithmetic_mean, zv_estimate
from .data import random_split, read_sample_file, write_sample_file
from .errors import (
    DataFormatError,
    InvalidInputError,
    NumericalError,
    SingularMatrixError,
)
from .estimator import (
    Estimate,
    cf_multisplit_estimate,
    cf_simplified_estimate,
    cf_split_estimate,
    cross_validate,
)
from .kernel import SteinKernelParams
from .targets import gaussian_problem, mixture_problem

ESTIMATE_METHODS = ("cf-split", "cf-simplified", "cf-multisplit", "mean", "zv1", "zv2")

SCHEMA_VERSION = 1


def _lambda_arg(text: str):
    if text == "auto":
        return None
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--lambda must be 'auto' or a number, got {text!r}")
    if value < 0 or not math.isfinite(value):
        raise argparse.ArgumentTypeError("--lambda must be non-negative and finite")
    return value


def _load_cv_grid(path) -> tuple[SteinKernelParams, ...]:
    try:
        with open(path) as fh:
            raw = json.load(fh)
        return tuple(SteinKernelParams(alpha1=float(a1), alpha2=float(a2)) for a1, a2 in raw)
    except OSError as exc:
        raise DataFormatError(f"{path}: {exc}") from None
    except (json.JSONDecodeError, TypeError, ValueError) as exc:
        raise DataFormatError(
            f"{path}: cv grid must be a JSON list of [alpha1, alpha2] pairs: {exc}"
        ) from None


def _builtin_target(name: str):
    match = re.fullmatch(r"gaussian-d(\d+)", name)
    if match:
        return gaussian_problem(int(match.group(1)))
    if name == "bimodal-mixture":
        return mixture_problem(
            weights=[0.5, 0.5], means=[-1.0, 1.0], scales=[0.5, 0.5], name="bimodal-mixture"
        )
    return None


def _print_estimate(est: Estimate, args, radius: float | None) -> None:
    payload = {
        "schema_version": SCHEMA_VERSION,
        "value": est.value,
        "method": est.method,
        "lambda_used": None if est.lambda_used is None or math.isnan(est.lambda_used) else est.lambda_used,
        "m": est.m,
        "n": est.n,
    }
    if est.n_splits is not None:
        payload["n_splits"] = est.n_splits
    if est.discrepancy is not None:
        payload["discrepancy"] = est.discrepancy
    if radius is not None:
        payload["bound_radius"] = radius
    if args.output == "json":
        print(json.dumps(payload, indent=2))
        return
    for key, value in payload.items():
        if key == "schema_version":
            continue
        print(f"{key} = {value}")


def cmd_estimate(args) -> int:
    data = read_sample_file(args.input)
    lam = args.lambda_
    grid = _load_cv_grid(args.cv_grid) if args.cv_grid else None
    radius = None

    if args.method == "mean":
        est = Estimate(
            value=arithmetic_mean(data.f_values), method="mean", n=data.n, m=data.n,
            lambda_used=math.nan,
        )
    elif args.method in ("zv1", "zv2"):
        est = zv_estimate(data, degree=int(args.method[-1]))
    else:
        params = SteinKernelParams(alpha1=args.alpha1, alpha2=args.alpha2)
        if args.method == "cf-simplified":
            if grid:
                params = cross_validate(data, grid, seed=args.seed)
            est = cf_simplified_estimate(data, params, lambda_=lam)
        elif args.method == "cf-split":
            m = math.ceil(args.split_fraction * data.n)
            if not 1 <= m < data.n:
                raise InvalidInputError(
                    f"split fraction {args.split_fraction} of n={data.n} gives degenerate m={m}"
                )
            plan = random_split(data.n, m, args.seed)
            if grid:
                params = cross_validate(data.subset(plan.index_d0), grid, seed=args.seed + 1)
            est = cf_split_estimate(
                data, plan, params, lambda_=lam, compute_discrepancy=args.bound
            )
            if args.bound:
                radius = math.sqrt(est.discrepancy) * args.fnorm
        else:  # cf-multisplit
            if grid:
                params = cross_validate(data, grid, seed=args.seed + 1)
            est = cf_multisplit_estimate(
                data, args.splits, args.split_fraction, params, seed=args.seed, lambda_=lam
            )
    _print_estimate(est, args, radius)
    return 0


def _resolve_config(token: str) -> Path:
    path = Path(token)
    if path.exists():
        return path
    bundled = resources.files("cfmc") / "configs" / f"{token}.json"
    if bundled.is_file():
        return bundled
    raise DataFormatError(f"no config file or bundled config named {token!r}")


def cmd_bench(args) -> int:
    config = bench_mod.load_config(_resolve_config(args.config))
    problem = bench_mod.build_problem(config)
    n_rows = len(config.n_grid) * config.replications * len(config.methods)
    n_cells = len(config.n_grid) * len(config.methods)
    if args.dry_run:
        print(f"config ok: problem={problem.name}")
        print(f"cells = {n_cells}")
        print(f"rows = {n_rows}")
        return 0
    if args.emit_samples:
        out = Path(args.emit_samples)
        out.mkdir(parents=True, exist_ok=True)
        for n in config.n_grid:
            for rep in range(config.replications):
                dataset = bench_mod.cell_dataset(config, problem, n, rep)
                write_sample_file(out / f"samples_n{n}_rep{rep}.csv", dataset)
        print(f"wrote {len(config.n_grid) * config.replications} sample files to {out}")
    report = bench_mod.run_experiment(config, threads=args.threads)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "report.csv"
    json_path = out_dir / "report.json"
    bench_mod.write_csv(report, csv_path)
    bench_mod.write_json(report, json_path)
    print(f"wrote {csv_path} and {json_path}")
    for name in report.method_names:
        fit = report.slopes[name]
        if fit is None:
            print(f"{name}: slope unavailable")
        else:
            print(f"{name}: log-log MSE slope = {fit.slope:.3f} (stderr {fit.stderr:.3f})")
    for note in report.notes:
        print(f"note: {note}")
    return 0


def cmd_diagnose(args, parser: argparse.ArgumentParser) -> int:
    problem = _builtin_target(args.target)
    if problem is None:
        parser.error(
            f"unknown target {args.target!r}; use gaussian-d<k> or bimodal-mixture"
        )
    params = SteinKernelParams(alpha1=args.alpha1, alpha2=args.alpha2)
    print(f"target = {problem.name}")
    print(f"alpha1 = {params.alpha1}")
    print(f"alpha2 = {params.alpha2}")
    if problem.dimension == 1 and problem.normalised_density is not None:
        probes = np.linspace(-3.0, 3.0, args.probes)
        residuals = diagnostics.mean_element_residuals(params, probes=probes, problem=problem)
        for x, res in zip(probes, residuals):
            print(f"mean_element_residual[x={x:+.3f}] = {res:.3e}")
        print(f"mean_element_max_abs_residual = {np.max(np.abs(residuals)):.3e}")
    else:
        print("mean_element_residuals = skipped (needs a d=1 target with a density)")
    report = diagnostics.gradient_check(seed=args.seed)
    print(f"gradient_check_max_rel_error = {report['max']:.3e}")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(args.seed)))
    dataset = problem.dataset(rng, args.sample_size)
    sup = diagnostics.sampled_sup_diag(dataset, params)
    print(f"sampled_sup_k0_diag = {sup:.6g} (over {args.sample_size} draws)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cfmc",
        description="Control-functional post-processing of Monte Carlo samples.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="estimate an expectation from a sample file")
    est.add_argument("input", help="sample file with columns x_1..x_d, f, u_1..u_d")
    est.add_argument("--method", choices=ESTIMATE_METHODS, default="cf-simplified")
    est.add_argument("--alpha1", type=float, default=0.1)
    est.add_argument("--alpha2", type=float, default=1.0)
    est.add_argument("--cv-grid", help="JSON file with [alpha1, alpha2] candidate pairs")
    est.add_argument("--split-fraction", type=float, default=0.5)
    est.add_argument("--splits", type=int, default=1)
    est.add_argument("--seed", type=int, default=0)
    est.add_argument("--lambda", dest="lambda_", type=_lambda_arg, default=None,
                     metavar="auto|VALUE", help="regularisation (default: auto rule)")
    est.add_argument("--output", choices=("text", "json"), default="text")
    est.add_argument("--bound", action="store_true",
                     help="also report the worst-case error radius sqrt(D)*fnorm")
    est.add_argument("--fnorm", type=float, default=None,
                     help="hypothesis-space norm of f, required with --bound")

    ben = sub.add_parser("bench", help="run a replicated convergence study")
    ben.add_argument("config", help="config file path or bundled name (e.g. paper_d1)")
    ben.add_argument("--out-dir", default="bench_out")
    ben.add_argument("--threads", type=int, default=1)
    ben.add_argument("--dry-run", action="store_true",
                     help="validate the config and print the cell count only")
    ben.add_argument("--emit-samples", metavar="DIR", default=None,
                     help="also write every replication's dataset as a sample file")

    dia = sub.add_parser("diagnose", help="numerical health checks for a built-in target")
    dia.add_argument("--target", default="gaussian-d1")
    dia.add_argument("--alpha1", type=float, default=0.1)
    dia.add_argument("--alpha2", type=float, default=1.0)
    dia.add_argument("--probes", type=int, default=10)
    dia.add_argument("--sample-size", type=int, default=1000)
    dia.add_argument("--seed", type=int, default=0)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "estimate":
        if args.bound and args.fnorm is None:
            parser.error("--bound requires --fnorm")
        if args.bound and args.method != "cf-split":
            parser.error("--bound is only available with --method cf-split")
        if args.fnorm is not None and not args.bound:
            parser.error("--fnorm only makes sense together with --bound")
    try:
        if args.command == "estimate":
            return cmd_estimate(args)
        if args.command == "bench":
            return cmd_bench(args)
        return cmd_diagnose(args, parser)
    except (DataFormatError, InvalidInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (SingularMatrixError, NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
