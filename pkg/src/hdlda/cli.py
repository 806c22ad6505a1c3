"""Command-line interface.

Subcommands: simulate (replicated experiments to CSV), fit and predict
(labeled-CSV pathway with JSON model persistence), oracle (population
diagnostics), bound (excess-risk bound for one fitted rule, or the
tightness example). Machine-readable output goes to standard out,
progress and diagnostics to standard error. Exit codes: 0 success,
1 runtime failure, 2 flag validation.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import classifiers, simharness, theory
from .classifiers import ALL_METHODS, FITTED_METHODS, TUNABLE_METHODS
from .errors import HdldaError
from .estimators import sparsity_and_rates
from .numerics import rng_stream
from .population import (
    LabeledSample,
    ar1_covariance,
    block_compound_symmetry,
    check_conditions,
    check_sim_model_args,
    compound_symmetry,
    mahalanobis_matrix,
    make_population,
    make_sample,
    make_sim_model,
    r_opt,
    sample_dataset,
)
from .tuning import default_grid, grid_search

LABEL_COLUMN = "class"


class CliError(Exception):
    """Runtime failure with a user-facing message; exits 1."""


def _float_cell(value: float) -> str:
    return repr(float(value))


def read_dataset_csv(path: str) -> tuple[LabeledSample | None, np.ndarray, list[str]]:
    """Read a feature CSV, with labels when a "class" column is present.

    Returns (sample or None, feature matrix, feature column names).
    """
    try:
        with open(path, encoding="utf-8", newline="") as handle:
            reader = csv.reader(handle)
            try:
                header = next(reader)
            except StopIteration:
                raise CliError(f"{path}: empty file") from None
            records = list(reader)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}") from exc
    if len(set(header)) != len(header):
        raise CliError(f"{path}: duplicate column names")
    arity = len(header)
    for lineno, record in enumerate(records, start=2):
        if len(record) != arity:
            raise CliError(f"{path}:{lineno}: expected {arity} cells, got {len(record)}")
        if any(cell == "" for cell in record):
            raise CliError(f"{path}:{lineno}: missing cell")
    label_idx = header.index(LABEL_COLUMN) if LABEL_COLUMN in header else None
    feature_names = [h for i, h in enumerate(header) if i != label_idx]
    try:
        matrix = np.array(
            [[float(c) for i, c in enumerate(rec) if i != label_idx] for rec in records],
            dtype=np.float64,
        ).reshape(len(records), len(feature_names))
    except ValueError as exc:
        raise CliError(f"{path}: non-numeric feature cell ({exc})") from exc
    if label_idx is None:
        return None, matrix, feature_names
    try:
        labels = np.array([int(rec[label_idx]) for rec in records], dtype=np.int64)
    except ValueError:
        raise CliError(f"{path}: class labels must be integers") from None
    try:
        sample = make_sample(matrix, labels)
    except (HdldaError, ValueError) as exc:
        raise CliError(f"{path}: {exc}") from exc
    return sample, matrix, feature_names


def write_dataset_csv(path: str, x: np.ndarray, labels: np.ndarray | None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        header = [f"x{j + 1}" for j in range(x.shape[1])]
        if labels is not None:
            header = [LABEL_COLUMN] + header
        writer.writerow(header)
        for i in range(x.shape[0]):
            cells = [_float_cell(v) for v in x[i]]
            if labels is not None:
                cells = [str(int(labels[i]))] + cells
            writer.writerow(cells)


def _covariance_from_spec(spec: dict, p: int) -> np.ndarray:
    kind = spec.get("kind")
    if kind == "identity":
        return np.eye(p)
    if kind == "compound":
        return compound_symmetry(p, float(spec["rho"]))
    if kind == "ar1":
        return ar1_covariance(p, float(spec["rho"]))
    if kind == "block":
        sizes = [int(s) for s in spec["sizes"]]
        rhos = [float(r) for r in spec["rhos"]]
        if sum(sizes) != p:
            raise ValueError(f"block sizes sum to {sum(sizes)}, expected {p}")
        return block_compound_symmetry(sizes, rhos)
    if kind == "dense":
        sigma = np.array(spec["matrix"], dtype=np.float64)
        if sigma.shape != (p, p):
            raise ValueError(f"dense covariance must be {p}x{p}")
        return sigma
    raise ValueError(f"unknown covariance kind {kind!r}")


def load_population_json(path: str):
    """Population JSON: {"k", "p", "means", "cov": {"kind": ..., ...}}."""
    try:
        with open(path, encoding="utf-8") as handle:
            data = json.load(handle)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: invalid JSON ({exc})") from exc
    try:
        k, p = int(data["k"]), int(data["p"])
        if k < 2:
            raise CliError(f"{path}: need K >= 2")
        means = np.array(data["means"], dtype=np.float64)
        if means.shape != (k, p):
            raise CliError(f"{path}: means must be {k}x{p}")
        sigma = _covariance_from_spec(data["cov"], p)
        return make_population(means, sigma)
    except CliError:
        raise
    except (KeyError, TypeError, ValueError, HdldaError) as exc:
        raise CliError(f"{path}: invalid population spec ({exc})") from exc


def _population_from_flags(args) -> tuple:
    """(population, description) from --population or --model/--p/--k."""
    if args.population is not None:
        return load_population_json(args.population), args.population
    model = make_sim_model(args.model, args.p, args.k)
    return model, f"model {args.model} (p={args.p}, k={args.k})"


def _add_population_flags(sub, require_model_default: bool = False) -> None:
    sub.add_argument("--population", help="population JSON path")
    sub.add_argument("--model", type=int, choices=(1, 2, 3),
                     help="built-in simulation model")
    sub.add_argument("--p", type=int, help="dimension for --model")
    sub.add_argument("--k", type=int, help="class count for --model")


def _check_population_flags(parser, args) -> None:
    if args.population is None:
        if args.model is None or args.p is None or args.k is None:
            parser.error("need --population or all of --model/--p/--k")
    elif args.model is not None or args.p is not None or args.k is not None:
        parser.error("--population conflicts with --model/--p/--k")


def cmd_simulate(args) -> int:
    grids = {}
    if args.lpd_grid is not None:
        from .tuning import Grid

        lams = tuple(float(v) for v in args.lpd_grid.split(","))
        grids["lpd"] = Grid(method="lpd", lams=lams)
    config = simharness.ExperimentConfig(
        model_id=args.model,
        p=args.p,
        k=args.k,
        n_train=args.n_train,
        n_test=args.n_test,
        reps=args.reps,
        cv_folds=args.cv_folds,
        methods=tuple(args.methods.split(",")),
        master_seed=args.seed,
        grids=grids,
    )
    result = simharness.run_experiment(config, workers=args.workers)
    aggregate_path = simharness.write_results_csv(
        result, args.out, aggregate_path=args.aggregate_out, timing=args.timing
    )
    for row in result.rows:
        print(
            f"rep {row.rep} {row.method}: "
            f"{'failed' if row.error is None else f'error {row.error:.4f}'} "
            f"({row.seconds:.2f}s)",
            file=sys.stderr,
        )
    for agg in simharness.aggregate_rows(result.rows, config.methods):
        print(
            f"{agg.method},{_float_cell(agg.mean_error)},{_float_cell(agg.sd_error)},"
            f"{agg.reps_used}"
        )
    print(f"wrote {args.out} and {aggregate_path}", file=sys.stderr)
    return 0


def cmd_fit(args) -> int:
    sample, _, _ = read_dataset_csv(args.train)
    if sample is None:
        raise CliError(f"{args.train}: no '{LABEL_COLUMN}' column")
    if args.method in TUNABLE_METHODS:
        grid = default_grid(args.method, sample)
        cv = grid_search(
            args.method, sample, grid, args.cv_folds,
            rng=rng_stream(args.seed, 0),
        )
        params = cv.best_params
        print(
            f"cv: best {json.dumps(params, sort_keys=True)} "
            f"error {cv.best_error:.4f}",
            file=sys.stderr,
        )
    else:
        params = {}
    model = classifiers.fit(args.method, sample, params)
    classifiers.save_model(model, args.model_out)
    report = classifiers.evaluate(model, sample)
    print(json.dumps({
        "method": args.method,
        "params": params,
        "train_error": report.error_rate,
        "model": args.model_out,
    }, sort_keys=True))
    return 0


def cmd_predict(args) -> int:
    try:
        model = classifiers.load_model(args.model)
    except (OSError, ValueError) as exc:
        raise CliError(f"cannot load model {args.model}: {exc}") from exc
    sample, matrix, _ = read_dataset_csv(args.data)
    if matrix.shape[1] != model.p:
        raise CliError(
            f"feature count mismatch: model expects {model.p}, "
            f"{args.data} has {matrix.shape[1]}"
        )
    predicted = model.predict(matrix)
    with open(args.out, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["predicted"])
        for label in predicted:
            writer.writerow([int(label)])
    if sample is not None:
        error = float(np.mean(predicted != sample.labels))
        print(json.dumps({"rows": int(matrix.shape[0]), "error": error}))
    else:
        print(json.dumps({"rows": int(matrix.shape[0])}))
    return 0


def cmd_oracle(args) -> int:
    population, source = _population_from_flags(args)
    mahal, m_min, m_max = mahalanobis_matrix(population)
    conditions = check_conditions(population)
    rate, se = r_opt(population, args.mc, rng_stream(args.seed, 0))
    out = {
        "source": source,
        "k": population.k,
        "p": population.p,
        "conditions": {
            "lambda_min": conditions.lambda_min,
            "lambda_max": conditions.lambda_max,
            "c0_witness": conditions.c0_witness,
            "m_min": conditions.m_min,
            "m_max": conditions.m_max,
            "k_le_p_plus_1": conditions.k_le_p_plus_1,
        },
        "mahalanobis": {
            "min": m_min,
            "max": m_max,
            "matrix": mahal.tolist(),
        },
        "r_opt": {"estimate": rate, "se": se, "mc_samples": args.mc},
    }
    if args.n is not None:
        rates = sparsity_and_rates(
            population, args.n, h=args.h, g=args.g, r=args.r
        )
        out["rates"] = {
            "n": args.n,
            "c_hp": rates.c_hp,
            "d_gp": rates.d_gp,
            "q_n": rates.q_n,
            "h": rates.h,
            "g": rates.g,
            "alpha": rates.alpha,
            "r": rates.r,
            "s_n": rates.s_n,
            "d_n_rate": rates.d_n_rate,
            "b_n": rates.b_n,
            "r_n": rates.r_n,
            "l1_beta_max": rates.l1_beta_max,
        }
    print(json.dumps(out, sort_keys=True))
    return 0


def cmd_bound(args) -> int:
    if args.example:
        ex = theory.tightness_example_bounds(args.d, args.eps)
        print(json.dumps({
            "d": args.d,
            "eps": args.eps,
            "upper_ratio_bound": ex.upper_ratio_bound,
            "mixing_bound": ex.mixing_bound,
            "strip_prob": ex.strip_prob,
        }, sort_keys=True))
        return 0
    population, _ = _population_from_flags(args)
    if args.n_train % population.k:
        raise CliError("--n-train must be divisible by k")
    stream = rng_stream(args.seed, 0)
    train = sample_dataset(population, args.n_train // population.k, stream)
    if args.method == "opt":
        rule = classifiers.make_opt_rule(population)
        params: dict = {}
    elif args.method in TUNABLE_METHODS:
        grid = default_grid(args.method, train)
        cv = grid_search(args.method, train, grid, args.cv_folds, rng=stream)
        params = cv.best_params
        rule = classifiers.fit(args.method, train, params)
    else:
        rule = classifiers.fit(args.method, train)
        params = {}
    report = theory.bound_report(
        population, rule, args.mc, rng_stream(args.seed, 1)
    )
    geom = theory.pair_geometry(population, rule)
    out = {
        "method": args.method,
        "params": params,
        "per_pair_probability": report.per_pair_probability.tolist(),
        "bound": report.bound,
        "r_opt_est": report.r_opt_est,
        "r_t_est": report.r_t_est,
        "gap_est": report.gap_est,
        "gap_se": report.gap_se,
    }
    if population.k == 2:
        check = theory.two_class_gap_check(geom, args.mc, rng_stream(args.seed, 2))
        out["two_class"] = {
            "value": check.value,
            "mc_gap": check.mc_gap,
            "residual": check.residual,
            "joint_se": check.joint_se,
        }
    print(json.dumps(out, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hdlda",
        description="High-dimensional multi-class linear discriminant rules.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="replicated simulation experiment")
    sim.add_argument("--model", type=int, required=True, choices=(1, 2, 3))
    sim.add_argument("--p", type=int, required=True)
    sim.add_argument("--k", type=int, required=True)
    sim.add_argument("--reps", type=int, default=10)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--methods", default=",".join(ALL_METHODS))
    sim.add_argument("--n-train", type=int, default=450)
    sim.add_argument("--n-test", type=int, default=450)
    sim.add_argument("--cv-folds", type=int, default=5)
    sim.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    sim.add_argument("--timing", choices=("zero", "measured"), default="zero")
    sim.add_argument("--lpd-grid", help="comma-separated lambda override")
    sim.add_argument("--out", required=True)
    sim.add_argument("--aggregate-out")
    sim.set_defaults(func=cmd_simulate)

    fit_p = sub.add_parser("fit", help="tune and fit one method on a labeled CSV")
    fit_p.add_argument("--method", required=True, choices=FITTED_METHODS)
    fit_p.add_argument("--train", required=True)
    fit_p.add_argument("--cv-folds", type=int, default=5)
    fit_p.add_argument("--seed", type=int, default=0)
    fit_p.add_argument("--model-out", required=True)
    fit_p.set_defaults(func=cmd_fit)

    pred = sub.add_parser("predict", help="label a CSV with a saved model")
    pred.add_argument("--model", required=True)
    pred.add_argument("--data", required=True)
    pred.add_argument("--out", required=True)
    pred.set_defaults(func=cmd_predict)

    ora = sub.add_parser("oracle", help="population diagnostics")
    _add_population_flags(ora)
    ora.add_argument("--mc", type=int, default=100000)
    ora.add_argument("--seed", type=int, default=0)
    ora.add_argument("--n", type=int, help="sample size for rate quantities")
    ora.add_argument("--h", type=float, default=0.5)
    ora.add_argument("--g", type=float, default=0.5)
    ora.add_argument("--r", type=float, default=2.0)
    ora.set_defaults(func=cmd_oracle)

    bnd = sub.add_parser("bound", help="excess-risk bound for a fitted rule")
    _add_population_flags(bnd)
    bnd.add_argument("--method", choices=ALL_METHODS)
    bnd.add_argument("--n-train", type=int, default=450)
    bnd.add_argument("--cv-folds", type=int, default=5)
    bnd.add_argument("--seed", type=int, default=0)
    bnd.add_argument("--mc", type=int, default=100000)
    bnd.add_argument("--example", action="store_true",
                     help="evaluate the tightness example instead")
    bnd.add_argument("--d", type=float)
    bnd.add_argument("--eps", type=float)
    bnd.set_defaults(func=cmd_bound)

    return parser


def _validate(parser: argparse.ArgumentParser, args) -> None:
    if args.command == "simulate":
        methods = args.methods.split(",")
        unknown = sorted(set(methods) - set(ALL_METHODS))
        if unknown:
            parser.error(f"unknown methods: {','.join(unknown)}")
        if args.reps < 1:
            parser.error("reps must be positive")
        if args.cv_folds < 2:
            parser.error("cv-folds must be at least 2")
        if args.n_train % args.k or args.n_test % args.k:
            parser.error("n-train and n-test must be divisible by k")
        try:
            check_sim_model_args(args.model, args.p, args.k)
        except (HdldaError, ValueError) as exc:
            parser.error(str(exc))
    if args.command in ("oracle", "bound") and getattr(args, "example", False) is False:
        _check_population_flags(parser, args)
        if args.population is None:
            try:
                check_sim_model_args(args.model, args.p, args.k)
            except (HdldaError, ValueError) as exc:
                parser.error(str(exc))
    if args.command == "bound":
        if args.example:
            if args.d is None or args.eps is None:
                parser.error("--example needs --d and --eps")
        elif args.method is None:
            parser.error("need --method (or --example)")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _validate(parser, args)
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except HdldaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
