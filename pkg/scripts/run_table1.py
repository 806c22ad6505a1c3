#!/usr/bin/env python3
"""Replicated error comparison of all methods on the standard designs.

Desk-scale defaults (reps=10, p=300) finish in minutes; pass --reps 50
--p 600 for the full-size runs. Results and aggregates land in CSV files
named after the design.
"""

import argparse
import sys

import numpy as np

from hdlda.simharness import ExperimentConfig, run_experiment, write_results_csv
from hdlda.tuning import Grid


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--models", default="1,2,3", help="designs to run")
    parser.add_argument("--p", type=int, default=300)
    parser.add_argument("--k", type=int, default=3)
    parser.add_argument("--reps", type=int, default=10)
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--methods", default="opt,glda,slda1,slda2,lpd,nsc")
    parser.add_argument("--lpd-grid", default=None,
                        help="comma-separated lambdas, e.g. 0.2,0.3,0.4")
    parser.add_argument("--out-prefix", default="table1")
    parser.add_argument("--timing", choices=("zero", "measured"), default="measured")
    args = parser.parse_args()

    grids = {}
    if args.lpd_grid:
        grids["lpd"] = Grid(
            method="lpd", lams=tuple(float(v) for v in args.lpd_grid.split(","))
        )

    for model_id in (int(m) for m in args.models.split(",")):
        config = ExperimentConfig(
            model_id=model_id,
            p=args.p,
            k=args.k,
            reps=args.reps,
            master_seed=args.seed,
            methods=tuple(args.methods.split(",")),
            grids=grids,
        )
        result = run_experiment(config, workers=args.workers)
        out = f"{args.out_prefix}_model{model_id}.csv"
        write_results_csv(result, out, timing=args.timing)
        print(f"design {model_id} (p={args.p}, k={args.k}, reps={args.reps}):")
        for agg in result.aggregates():
            se = agg.sd_error / np.sqrt(agg.reps_used) if agg.reps_used else float("nan")
            print(
                f"  {agg.method:6s} error {agg.mean_error:.3f} ({agg.sd_error:.3f})"
                f"  se {se:.4f}  time {agg.mean_seconds:6.2f}s  reps {agg.reps_used}"
            )
        print(f"  wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
