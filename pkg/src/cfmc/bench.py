"""Replicated convergence experiments with machine-readable reports.

An experiment draws, for every sample size in a grid and every replication,
one dataset from a target problem; every configured method then consumes the
bit-identical dataset.  Per-cell bias/variance/MSE and per-method log-log MSE
slopes are aggregated into a report that serialises to CSV (one row per
method, sample size and replication) and JSON (summary statistics).

Randomness is counter-based: the stream for a cell is keyed by
(master_seed, n, replication), so enlarging the grid or the replication count
never perturbs existing cells, and parallel execution reproduces the
sequential results exactly.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import baselines
from .data import ScoredDataset, random_split
from .errors import CfmcError, InvalidInputError
from .estimator import (
    cf_multisplit_estimate,
    cf_simplified_estimate,
    cf_split_estimate,
    cross_validate,
)
from .kernel import SteinKernelParams
from .targets import TargetProblem, gaussian_problem, mixture_problem, oracle_mean

METHOD_TAGS = ("mean", "zv1", "zv2", "riemann", "cf-split", "cf-simplified", "cf-multisplit")

SCHEMA_VERSION = 1

CSV_COLUMNS = ("method", "n", "replication", "estimate", "lambda_used", "seed")


@dataclass(frozen=True)
class MethodSpec:
    """One estimator to run in an experiment.

    ``alpha1``/``alpha2`` fix the kernel hyper-parameters unless ``cv_grid``
    is given, in which case they are selected per replication by hold-out
    validation on the fitting samples.  ``label`` names the method in reports
    and defaults to the tag.
    """

    method: str
    alpha1: float = 0.1
    alpha2: float = 1.0
    lambda_: float | None = None
    cv_grid: tuple[SteinKernelParams, ...] | None = None
    cv_train_fraction: float = 0.5
    label: str | None = None

    def __post_init__(self):
        if self.method not in METHOD_TAGS:
            raise InvalidInputError(
                f"unknown method {self.method!r}; valid tags: {', '.join(METHOD_TAGS)}"
            )

    @property
    def name(self) -> str:
        return self.label or self.method

    def kernel_params(self) -> SteinKernelParams:
        return SteinKernelParams(alpha1=self.alpha1, alpha2=self.alpha2)


@dataclass(frozen=True)
class ExperimentConfig:
    """Full description of a replicated convergence study."""

    problem: str
    problem_params: dict
    n_grid: tuple[int, ...]
    replications: int
    methods: tuple[MethodSpec, ...]
    master_seed: int
    split_fraction: float = 0.5
    n_splits: int = 1

    def __post_init__(self):
        grid = tuple(int(n) for n in self.n_grid)
        if not grid or any(n < 2 for n in grid):
            raise InvalidInputError("n_grid must be non-empty with every size >= 2")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise InvalidInputError("n_grid must be strictly ascending")
        if self.replications < 1:
            raise InvalidInputError("replications must be >= 1")
        if not self.methods:
            raise InvalidInputError("at least one method is required")
        names = [spec.name for spec in self.methods]
        if len(set(names)) != len(names):
            raise InvalidInputError(f"method labels must be unique, got {names}")
        if not 0.0 < self.split_fraction < 1.0:
            raise InvalidInputError("split_fraction must lie in (0, 1)")
        if self.n_splits < 1:
            raise InvalidInputError("n_splits must be >= 1")
        object.__setattr__(self, "n_grid", grid)
        object.__setattr__(self, "methods", tuple(self.methods))


_CONFIG_KEYS = {
    "problem",
    "problem_params",
    "n_grid",
    "replications",
    "methods",
    "master_seed",
    "split_fraction",
    "n_splits",
}

_METHOD_KEYS = {
    "method",
    "alpha1",
    "alpha2",
    "lambda",
    "cv_grid",
    "cv_train_fraction",
    "label",
}


def load_config(source) -> ExperimentConfig:
    """Build an :class:`ExperimentConfig` from a JSON file path or a dict.

    Unknown keys, at the top level or inside a method entry, are all listed
    in a single error rather than reported one at a time.
    """
    if isinstance(source, dict):
        raw = source
    else:
        with open(source) as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise InvalidInputError(f"{source}: not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise InvalidInputError("config must be a JSON object")
    unknown = sorted(set(raw) - _CONFIG_KEYS)
    for i, entry in enumerate(raw.get("methods", [])):
        if isinstance(entry, dict):
            unknown.extend(f"methods[{i}].{k}" for k in sorted(set(entry) - _METHOD_KEYS))
    if unknown:
        raise InvalidInputError(f"unknown config keys: {', '.join(unknown)}")
    missing = [k for k in ("problem", "n_grid", "replications", "methods", "master_seed") if k not in raw]
    if missing:
        raise InvalidInputError(f"missing config keys: {', '.join(missing)}")
    methods = []
    for entry in raw["methods"]:
        if not isinstance(entry, dict) or "method" not in entry:
            raise InvalidInputError(f"each method entry needs a 'method' tag, got {entry!r}")
        cv_grid = None
        if entry.get("cv_grid") is not None:
            cv_grid = tuple(
                SteinKernelParams(alpha1=float(a1), alpha2=float(a2))
                for a1, a2 in entry["cv_grid"]
            )
        methods.append(
            MethodSpec(
                method=entry["method"],
                alpha1=float(entry.get("alpha1", 0.1)),
                alpha2=float(entry.get("alpha2", 1.0)),
                lambda_=None if entry.get("lambda") in (None, "auto") else float(entry["lambda"]),
                cv_grid=cv_grid,
                cv_train_fraction=float(entry.get("cv_train_fraction", 0.5)),
                label=entry.get("label"),
            )
        )
    return ExperimentConfig(
        problem=raw["problem"],
        problem_params=dict(raw.get("problem_params", {})),
        n_grid=tuple(raw["n_grid"]),
        replications=int(raw["replications"]),
        methods=tuple(methods),
        master_seed=int(raw["master_seed"]),
        split_fraction=float(raw.get("split_fraction", 0.5)),
        n_splits=int(raw.get("n_splits", 1)),
    )


def build_problem(config: ExperimentConfig) -> TargetProblem:
    if config.problem == "gaussian":
        return gaussian_problem(int(config.problem_params.get("d", 1)))
    if config.problem == "mixture":
        return mixture_problem(**config.problem_params)
    raise InvalidInputError(
        f"unknown problem {config.problem!r}; valid names: gaussian, mixture"
    )


def _data_stream(master_seed: int, n: int, replication: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=master_seed, spawn_key=(n, replication, 0))


def _method_stream(master_seed: int, n: int, replication: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=master_seed, spawn_key=(n, replication, 1 + index))


def cell_dataset(config: ExperimentConfig, problem: TargetProblem, n: int, replication: int) -> ScoredDataset:
    """The dataset consumed by every method in cell (n, replication)."""
    rng = np.random.Generator(np.random.Philox(_data_stream(config.master_seed, n, replication)))
    return problem.dataset(rng, n)


def _run_method(
    spec: MethodSpec,
    dataset: ScoredDataset,
    problem: TargetProblem,
    config: ExperimentConfig,
    stream: np.random.SeedSequence,
) -> tuple[float, float | None]:
    """Run one method on one dataset; returns (estimate, lambda or None)."""
    if spec.method == "mean":
        return baselines.arithmetic_mean(dataset.f_values), None
    if spec.method in ("zv1", "zv2"):
        est = baselines.zv_estimate(dataset, degree=int(spec.method[-1]))
        return est.value, None
    if spec.method == "riemann":
        if problem.normalised_density is None or problem.dimension != 1:
            raise InvalidInputError("riemann baseline needs a d=1 problem with a density")
        return baselines.riemann_1d(dataset, problem.normalised_density), None

    run_stream, cv_stream = stream.spawn(2)
    if spec.method == "cf-simplified":
        params = spec.kernel_params()
        if spec.cv_grid:
            params = cross_validate(
                dataset, spec.cv_grid, train_fraction=spec.cv_train_fraction, seed=cv_stream
            )
        est = cf_simplified_estimate(dataset, params, lambda_=spec.lambda_)
        return est.value, est.lambda_used
    if spec.method == "cf-split":
        m = math.ceil(config.split_fraction * dataset.n)
        plan = random_split(dataset.n, m, run_stream)
        params = spec.kernel_params()
        if spec.cv_grid:
            d0 = dataset.subset(plan.index_d0)
            params = cross_validate(
                d0, spec.cv_grid, train_fraction=spec.cv_train_fraction, seed=cv_stream
            )
        est = cf_split_estimate(dataset, plan, params, lambda_=spec.lambda_)
        return est.value, est.lambda_used
    if spec.method == "cf-multisplit":
        params = spec.kernel_params()
        if spec.cv_grid:
            cv_plan = random_split(dataset.n, math.ceil(config.split_fraction * dataset.n), cv_stream)
            params = cross_validate(
                dataset.subset(cv_plan.index_d0),
                spec.cv_grid,
                train_fraction=spec.cv_train_fraction,
                seed=cv_stream,
            )
        est = cf_multisplit_estimate(
            dataset, config.n_splits, config.split_fraction, params, seed=run_stream,
            lambda_=spec.lambda_,
        )
        return est.value, est.lambda_used
    raise InvalidInputError(f"unknown method {spec.method!r}")


@dataclass(frozen=True)
class Row:
    """One CSV row: one method on one replication of one sample size."""

    method: str
    n: int
    replication: int
    estimate: float | None
    lambda_used: float | None
    seed: int


@dataclass(frozen=True)
class CellStats:
    """Aggregate statistics of one (method, n) cell."""

    mean_estimate: float | None
    bias: float | None
    variance: float | None
    mse: float | None
    n_mse: float | None
    failures: int
    replications: int

    @property
    def flagged(self) -> bool:
        return self.failures > 0.1 * self.replications


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    stderr: float
    n_points: int


@dataclass
class ConvergenceReport:
    """Everything an experiment produced, ready for serialisation."""

    problem_name: str
    oracle: float
    n_grid: tuple[int, ...]
    replications: int
    master_seed: int
    split_fraction: float
    n_splits: int
    method_names: tuple[str, ...]
    rows: list[Row]
    cells: dict[tuple[str, int], CellStats]
    slopes: dict[str, SlopeFit | None]
    notes: list[str] = field(default_factory=list)

    def cell(self, method: str, n: int) -> CellStats:
        return self.cells[(method, n)]


def estimate_slope(points) -> SlopeFit:
    """Least-squares slope of log(MSE) against log(n).

    Non-positive MSE values are excluded with a warning; at least three
    usable points are required.
    """
    usable = []
    for n, mse in points:
        if mse is None or mse <= 0.0 or not np.isfinite(mse):
            warnings.warn(
                f"excluding unusable MSE {mse!r} at n={n} from the slope fit",
                RuntimeWarning,
                stacklevel=2,
            )
            continue
        usable.append((float(n), float(mse)))
    if len(usable) < 3:
        raise InvalidInputError(
            f"slope fit needs at least 3 positive-MSE points, got {len(usable)}"
        )
    x = np.log([n for n, _ in usable])
    y = np.log([m for _, m in usable])
    x_c = x - x.mean()
    sxx = float(x_c @ x_c)
    slope = float(x_c @ y) / sxx
    intercept = float(y.mean() - slope * x.mean())
    residuals = y - (intercept + slope * x)
    dof = len(usable) - 2
    sigma2 = float(residuals @ residuals) / dof
    return SlopeFit(slope=slope, stderr=math.sqrt(max(sigma2, 0.0) / sxx), n_points=len(usable))


def run_experiment(
    config: ExperimentConfig, threads: int = 1, problem: TargetProblem | None = None
) -> ConvergenceReport:
    """Run the full study described by ``config``.

    ``threads`` only controls scheduling; per-cell streams and a fixed
    aggregation order make the report identical for any thread count.  Method
    failures are recorded per cell rather than aborting the study.  Passing
    ``problem`` overrides the one named in the config (for custom targets).
    """
    if problem is None:
        problem = build_problem(config)
    oracle = oracle_mean(problem)
    tasks = [(n, rep) for n in config.n_grid for rep in range(config.replications)]

    def worker(task):
        n, rep = task
        dataset = cell_dataset(config, problem, n, rep)
        seed_value = int(_data_stream(config.master_seed, n, rep).generate_state(1)[0])
        results = []
        for index, spec in enumerate(config.methods):
            stream = _method_stream(config.master_seed, n, rep, index)
            try:
                value, lam = _run_method(spec, dataset, problem, config, stream)
            except (CfmcError, np.linalg.LinAlgError):
                value, lam = None, None
            results.append(
                Row(
                    method=spec.name,
                    n=n,
                    replication=rep,
                    estimate=value,
                    lambda_used=lam,
                    seed=seed_value,
                )
            )
        return results

    if threads <= 1:
        per_task = [worker(task) for task in tasks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_task = list(pool.map(worker, tasks))

    rows = [row for group in per_task for row in group]
    notes: list[str] = []
    cells: dict[tuple[str, int], CellStats] = {}
    for spec in config.methods:
        for n in config.n_grid:
            values = [
                row.estimate
                for row in rows
                if row.method == spec.name and row.n == n
            ]
            good = np.array([v for v in values if v is not None], dtype=float)
            failures = len(values) - good.size
            if good.size == 0:
                cells[(spec.name, n)] = CellStats(
                    None, None, None, None, None, failures, len(values)
                )
                notes.append(f"cell ({spec.name}, n={n}): every replication failed")
                continue
            mean_est = float(np.mean(good))
            bias = mean_est - oracle
            variance = float(np.mean((good - mean_est) ** 2))
            mse = float(np.mean((good - oracle) ** 2))
            stats = CellStats(
                mean_estimate=mean_est,
                bias=bias,
                variance=variance,
                mse=mse,
                n_mse=n * mse,
                failures=failures,
                replications=len(values),
            )
            cells[(spec.name, n)] = stats
            if stats.flagged:
                notes.append(
                    f"cell ({spec.name}, n={n}): {failures}/{len(values)} replications failed"
                )

    slopes: dict[str, SlopeFit | None] = {}
    for spec in config.methods:
        points = [(n, cells[(spec.name, n)].mse) for n in config.n_grid]
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                slopes[spec.name] = estimate_slope(points)
        except InvalidInputError as exc:
            slopes[spec.name] = None
            notes.append(f"slope for {spec.name}: {exc}")

    return ConvergenceReport(
        problem_name=problem.name,
        oracle=oracle,
        n_grid=config.n_grid,
        replications=config.replications,
        master_seed=config.master_seed,
        split_fraction=config.split_fraction,
        n_splits=config.n_splits,
        method_names=tuple(spec.name for spec in config.methods),
        rows=rows,
        cells=cells,
        slopes=slopes,
        notes=notes,
    )


def _fmt(value: float | None) -> str:
    return "" if value is None else repr(float(value))


def write_csv(report: ConvergenceReport, path) -> None:
    """One row per (method, n, replication); floats use shortest round-trip
    formatting so identical runs produce identical bytes."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in report.rows:
            writer.writerow(
                [
                    row.method,
                    row.n,
                    row.replication,
                    _fmt(row.estimate),
                    _fmt(row.lambda_used),
                    row.seed,
                ]
            )


def report_summary(report: ConvergenceReport) -> dict:
    """The JSON-serialisable summary; key layout is part of the contract."""
    cells = {}
    for name in report.method_names:
        cells[name] = {}
        for n in report.n_grid:
            stats = report.cells[(name, n)]
            cells[name][str(n)] = {
                "mean_estimate": stats.mean_estimate,
                "bias": stats.bias,
                "variance": stats.variance,
                "mse": stats.mse,
                "n_mse": stats.n_mse,
                "failures": stats.failures,
                "replications": stats.replications,
                "flagged": stats.flagged,
            }
    slopes = {
        name: (
            None
            if fit is None
            else {"slope": fit.slope, "stderr": fit.stderr, "n_points": fit.n_points}
        )
        for name, fit in report.slopes.items()
    }
    return {
        "schema_version": SCHEMA_VERSION,
        "problem": report.problem_name,
        "oracle_mean": report.oracle,
        "n_grid": list(report.n_grid),
        "replications": report.replications,
        "master_seed": report.master_seed,
        "split_fraction": report.split_fraction,
        "n_splits": report.n_splits,
        "methods": list(report.method_names),
        "slopes": slopes,
        "cells": cells,
        "notes": report.notes,
    }


def write_json(report: ConvergenceReport, path) -> None:
    with open(path, "w") as fh:
        json.dump(report_summary(report), fh, indent=2)
        fh.write("\n")
