#!/usr/bin/env python3
"""Wall-clock comparison of the tunable methods as the class count grows.

Each cell is the mean per-replication seconds for one method, including
its cross-validation. The l1-programming method solves K - 1 linear
programs per fit, so its cost grows visibly faster in K than the
thresholding methods'.
"""

import argparse
import sys

from hdlda.simharness import ExperimentConfig, run_experiment


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--model", type=int, default=1, choices=(1, 2, 3))
    parser.add_argument("--p", type=int, default=200)
    parser.add_argument("--k-grid", default="3,4,5")
    parser.add_argument("--reps", type=int, default=3)
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--methods", default="slda2,lpd,nsc")
    args = parser.parse_args()

    methods = tuple(args.methods.split(","))
    k_values = [int(k) for k in args.k_grid.split(",")]
    table = {}
    for k in k_values:
        n = 150 * k
        config = ExperimentConfig(
            model_id=args.model, p=args.p, k=k, n_train=n, n_test=n,
            reps=args.reps, master_seed=args.seed, methods=methods,
        )
        result = run_experiment(config)
        for agg in result.aggregates():
            table[(agg.method, k)] = agg.mean_seconds

    header = "method  " + "".join(f"  K={k:<8d}" for k in k_values)
    print(header)
    for method in methods:
        cells = "".join(f"  {table[(method, k)]:8.2f}s" for k in k_values)
        print(f"{method:6s}  {cells}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
