#!/usr/bin/env python3
"""Excess-risk ratio of a method along a growing-sample grid.

Prints the per-n mean of (conditional error / optimal error - 1), its
rank-correlation trend against n, and the rate diagnostics of the
generating design at each n.
"""

import argparse
import sys

from hdlda.estimators import sparsity_and_rates
from hdlda.population import make_sim_model
from hdlda.simharness import convergence_experiment


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--method", default="slda2")
    parser.add_argument("--model", type=int, default=3, choices=(1, 2, 3))
    parser.add_argument("--p", type=int, default=100)
    parser.add_argument("--k", type=int, default=3)
    parser.add_argument("--n-grid", default="200,400,800,1600")
    parser.add_argument("--reps", type=int, default=10)
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--mc", type=int, default=100000)
    args = parser.parse_args()

    n_grid = tuple(int(n) for n in args.n_grid.split(","))
    model = make_sim_model(args.model, args.p, args.k)
    result = convergence_experiment(
        args.method, args.model, args.p, args.k, n_grid,
        reps=args.reps, master_seed=args.seed, mc_samples=args.mc,
    )
    print(f"{args.method} on design {args.model} (p={args.p}, k={args.k}), "
          f"{args.reps} reps:")
    for n, mean_ratio in zip(result.n_values, result.mean_ratios):
        rates = sparsity_and_rates(model, n)
        print(f"  n={n:5d}  mean ratio {mean_ratio:8.4f}   s_n={rates.s_n:9.3f} "
              f"b_n={rates.b_n:8.4f} r_n={rates.r_n:8.4f}")
    print(f"  rank correlation of mean ratio vs n: {result.spearman:+.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
