"""Replicated simulation experiments with reproducible parallelism.

A replication derives one random stream from (master_seed, rep_id) and
draws, in order: the training sample, the test sample, and one
cross-validation fold assignment shared by every tunable method. Methods
consume no further randomness, so results do not depend on which other
methods run, on the worker count, or on scheduling. Wall-clock seconds
are always measured in memory; the CSV writer zeroes them by default so
repeated runs are byte-identical, and writes measured values on request.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from threadpoolctl import threadpool_limits

from .classifiers import (
    ALL_METHODS,
    TUNABLE_METHODS,
    evaluate,
    fit,
    make_opt_rule,
)
from .errors import HdldaError
from .numerics import RngStream, rng_stream
from .population import make_sim_model, near_balanced_counts, sample_dataset
from .theory import mc_gap
from .tuning import Grid, default_grid, grid_search, stratified_folds

_MC_STREAM_FLAG = 1 << 40


@dataclass(frozen=True)
class ExperimentConfig:
    model_id: int
    p: int
    k: int
    n_train: int = 450
    n_test: int = 450
    reps: int = 50
    cv_folds: int = 5
    methods: tuple[str, ...] = ALL_METHODS
    master_seed: int = 0
    grids: dict = field(default_factory=dict)  # method -> Grid override
    mc_samples: int = 100000

    def __post_init__(self) -> None:
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        if self.n_train % self.k or self.n_test % self.k:
            raise ValueError("n_train and n_test must be divisible by k")
        if self.cv_folds < 2:
            raise ValueError("cv_folds must be at least 2")
        if not self.methods:
            raise ValueError("methods must be nonempty")
        unknown = sorted(set(self.methods) - set(ALL_METHODS))
        if unknown:
            raise ValueError(f"unknown methods {unknown}")
        for name, grid in self.grids.items():
            if not isinstance(grid, Grid) or grid.method != name:
                raise ValueError(f"grid override for {name!r} is inconsistent")


@dataclass(frozen=True)
class MethodRow:
    method: str
    rep: int
    seed: int  # fingerprint of the replication's stream
    error: float | None  # None when the fit failed
    seconds: float
    params: dict


@dataclass(frozen=True)
class AggregateRow:
    method: str
    mean_error: float
    sd_error: float
    mean_seconds: float
    sd_seconds: float
    reps_used: int


@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    rows: tuple[MethodRow, ...]

    def aggregates(self) -> tuple[AggregateRow, ...]:
        return aggregate_rows(self.rows, self.config.methods)


def run_replication(config: ExperimentConfig, rep_id: int) -> tuple[MethodRow, ...]:
    """One train/tune/fit/test pass over every configured method."""
    model = make_sim_model(config.model_id, config.p, config.k)
    with threadpool_limits(limits=1):
        stream = rng_stream(config.master_seed, rep_id)
        seed = stream.base
        train = sample_dataset(model, config.n_train // config.k, stream)
        test = sample_dataset(model, config.n_test // config.k, stream)
        fold_ids = stratified_folds(train.labels, config.cv_folds, stream)

        rows = []
        for method in config.methods:
            start = time.perf_counter()
            params: dict = {}
            try:
                if method == "opt":
                    rule = make_opt_rule(model)
                elif method in TUNABLE_METHODS:
                    grid = config.grids.get(method) or default_grid(method, train)
                    cv = grid_search(
                        method, train, grid, config.cv_folds, fold_ids=fold_ids
                    )
                    params = cv.best_params
                    rule = fit(method, train, params)
                else:
                    rule = fit(method, train)
                error: float | None = evaluate(rule, test).error_rate
            except HdldaError:
                error = None
                params = {}
            rows.append(
                MethodRow(
                    method=method,
                    rep=rep_id,
                    seed=seed,
                    error=error,
                    seconds=time.perf_counter() - start,
                    params=params,
                )
            )
    return tuple(rows)


def run_experiment(config: ExperimentConfig, workers: int = 1) -> ExperimentResult:
    """All replications, optionally across processes, assembled in rep order."""
    if workers < 1:
        raise ValueError("workers must be at least 1")
    rep_ids = range(config.reps)
    if workers == 1 or config.reps == 1:
        per_rep = [run_replication(config, r) for r in rep_ids]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_rep = list(pool.map(run_replication, [config] * config.reps, rep_ids))
    rows = tuple(row for rep_rows in per_rep for row in rep_rows)
    return ExperimentResult(config=config, rows=rows)


def aggregate_rows(
    rows: tuple[MethodRow, ...], methods: tuple[str, ...] | None = None
) -> tuple[AggregateRow, ...]:
    """Per-method mean and sample standard deviation over non-missing rows."""
    if methods is None:
        seen = []
        for row in rows:
            if row.method not in seen:
                seen.append(row.method)
        methods = tuple(seen)
    out = []
    for method in methods:
        errors = [r.error for r in rows if r.method == method and r.error is not None]
        seconds = [r.seconds for r in rows if r.method == method and r.error is not None]
        used = len(errors)
        if used == 0:
            out.append(AggregateRow(method, float("nan"), 0.0, float("nan"), 0.0, 0))
            continue
        e = np.asarray(errors)
        s = np.asarray(seconds)
        sd_e = float(e.std(ddof=1)) if used > 1 else 0.0
        sd_s = float(s.std(ddof=1)) if used > 1 else 0.0
        out.append(
            AggregateRow(method, float(e.mean()), sd_e, float(s.mean()), sd_s, used)
        )
    return tuple(out)


def default_aggregate_path(path: str) -> str:
    """Sibling aggregates file: results.csv -> results.aggregate.csv."""
    stem, dot, ext = path.rpartition(".")
    if not dot:
        return path + ".aggregate"
    return f"{stem}.aggregate.{ext}"


def write_results_csv(
    result: ExperimentResult,
    path: str,
    aggregate_path: str | None = None,
    timing: str = "zero",
) -> str:
    """Write per-rep rows and a sibling aggregates file; returns that path.

    timing selects the seconds column: "zero" writes 0.0 everywhere so
    identical configurations yield byte-identical files; "measured"
    writes wall-clock values. Aggregates are computed from the rows as
    written, so the two files always agree.
    """
    if timing not in ("zero", "measured"):
        raise ValueError("timing must be 'zero' or 'measured'")
    if aggregate_path is None:
        aggregate_path = default_aggregate_path(path)

    written = tuple(
        row if timing == "measured" else replace(row, seconds=0.0)
        for row in result.rows
    )
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["method", "rep", "seed", "error", "seconds", "params_json"])
        for row in written:
            writer.writerow(
                [
                    row.method,
                    row.rep,
                    row.seed,
                    "" if row.error is None else repr(row.error),
                    repr(row.seconds),
                    json.dumps(row.params, sort_keys=True, separators=(",", ":")),
                ]
            )
    with open(aggregate_path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(
            ["method", "mean_error", "sd_error", "mean_seconds", "sd_seconds", "reps_used"]
        )
        for agg in aggregate_rows(written, result.config.methods):
            writer.writerow(
                [
                    agg.method,
                    repr(agg.mean_error),
                    repr(agg.sd_error),
                    repr(agg.mean_seconds),
                    repr(agg.sd_seconds),
                    agg.reps_used,
                ]
            )
    return aggregate_path


def read_results_csv(path: str) -> tuple[MethodRow, ...]:
    """Read back a per-rep results file written by write_results_csv."""
    rows = []
    with open(path, encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        expected = ["method", "rep", "seed", "error", "seconds", "params_json"]
        if header != expected:
            raise ValueError(f"unexpected results header {header}")
        for record in reader:
            method, rep, seed, error, seconds, params_json = record
            rows.append(
                MethodRow(
                    method=method,
                    rep=int(rep),
                    seed=int(seed),
                    error=None if error == "" else float(error),
                    seconds=float(seconds),
                    params=json.loads(params_json),
                )
            )
    return tuple(rows)


@dataclass(frozen=True)
class ConvergenceResult:
    method: str
    n_values: tuple[int, ...]
    ratios: np.ndarray  # (len(n_values), reps): conditional/optimal - 1
    mean_ratios: np.ndarray
    spearman: float


def _ranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size)
    ranks[order] = np.arange(1, values.size + 1, dtype=np.float64)
    # average ranks across exact ties
    for v in np.unique(values):
        mask = values == v
        if mask.sum() > 1:
            ranks[mask] = ranks[mask].mean()
    return ranks


def spearman_rho(x: np.ndarray, y: np.ndarray) -> float:
    """Rank correlation with average ranks on ties."""
    rx = _ranks(np.asarray(x, dtype=np.float64))
    ry = _ranks(np.asarray(y, dtype=np.float64))
    rx -= rx.mean()
    ry -= ry.mean()
    denom = np.sqrt((rx * rx).sum() * (ry * ry).sum())
    if denom == 0.0:
        return 0.0
    return float((rx * ry).sum() / denom)


def convergence_experiment(
    method: str,
    model_id: int,
    p: int,
    k: int,
    n_grid: tuple[int, ...],
    reps: int,
    master_seed: int,
    cv_folds: int = 5,
    mc_samples: int = 100000,
    grids: dict | None = None,
) -> ConvergenceResult:
    """Excess-risk ratio of one method along a growing-sample grid.

    For each (n, rep): draw a training sample, tune and fit, then
    estimate the fitted and optimal risks on shared Monte Carlo draws;
    the recorded quantity is their ratio minus one. The trend statistic
    is the rank correlation of the per-n mean ratios against n.
    """
    if list(n_grid) != sorted(set(n_grid)) or len(n_grid) < 2:
        raise ValueError("n_grid must be strictly increasing with length >= 2")
    if n_grid[0] < k:
        raise ValueError("the smallest n must cover every class")
    grids = grids or {}
    model = make_sim_model(model_id, p, k)
    ratios = np.empty((len(n_grid), reps))
    with threadpool_limits(limits=1):
        for ni, n in enumerate(n_grid):
            for rep in range(reps):
                data_id = ni * reps + rep
                stream = rng_stream(master_seed, data_id)
                train = sample_dataset(model, near_balanced_counts(n, k), stream)
                if method == "opt":
                    rule = make_opt_rule(model)
                elif method in TUNABLE_METHODS:
                    fold_ids = stratified_folds(train.labels, cv_folds, stream)
                    grid = grids.get(method) or default_grid(method, train)
                    cv = grid_search(method, train, grid, cv_folds, fold_ids=fold_ids)
                    rule = fit(method, train, cv.best_params)
                else:
                    rule = fit(method, train)
                mc_rng = rng_stream(master_seed, _MC_STREAM_FLAG | data_id)
                r_t, r_o, _, _ = mc_gap(model, rule, mc_samples, mc_rng)
                ratios[ni, rep] = r_t / r_o - 1.0
    mean_ratios = ratios.mean(axis=1)
    rho = spearman_rho(np.asarray(n_grid, dtype=np.float64), mean_ratios)
    return ConvergenceResult(
        method=method,
        n_values=tuple(int(n) for n in n_grid),
        ratios=ratios,
        mean_ratios=mean_ratios,
        spearman=rho,
    )
