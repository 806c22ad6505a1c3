"""End-to-end acceptance checks.

Each test_aNN function covers one numbered acceptance check, so a verbose
run prints one pass/fail line per check. Statistical checks run on frozen
seeds; the printed detail lines carry the measured numbers.
"""

import math
import subprocess
from itertools import combinations

import numpy as np
import pytest

from hdlda.classifiers import fit
from hdlda.estimators import sparsity_and_rates
from hdlda.lp import StandardLp, solve_l1_linf, solve_standard
from hdlda.numerics import (
    bvn_lower_cdf,
    cholesky,
    pinv,
    rng_stream,
    std_normal_cdf,
)
from hdlda.population import (
    make_population,
    make_sim_model,
    mahalanobis_matrix,
    near_balanced_counts,
    r_opt,
    sample_dataset,
)
from hdlda.simharness import (
    ExperimentConfig,
    aggregate_rows,
    convergence_experiment,
    run_experiment,
)
from hdlda.theory import (
    bound_report,
    pair_geometry,
    tightness_example_bounds,
    two_class_gap_check,
)
from hdlda.tuning import Grid, default_grid

SEED_TABLE = 1
SEED_ORDERING = 2
SEED_CONVERGENCE = 3
SEED_RATES = 4
SEED_BOUND = 5
SEED_LP = 6
SEED_NUM = 7

# coarser lambda sweep keeps the big experiment affordable on one core
LPD_SUBGRID = (0.2, 0.3, 0.4, 0.5, 0.6, 0.7)


def _detail(tag: str, text: str) -> None:
    print(f"[{tag}] {text}")


def _random_covariance(rng, p: int) -> np.ndarray:
    a = rng.normals(p * p).reshape(p, p)
    return a @ a.T + 0.5 * np.eye(p)


# --------------------------------------------------------------------------
# a01: dense compound-symmetry model, mean error rates of all five rules


def test_a01_model1_mean_errors():
    targets = {
        "opt": (0.023, 0.010),
        "glda": (0.197, 0.040),
        "lpd": (0.027, 0.015),
        "slda2": (0.067, 0.035),
        "nsc": (0.052, 0.035),
    }
    config = ExperimentConfig(
        model_id=1, p=300, k=3, n_train=450, n_test=450, reps=10,
        cv_folds=5, methods=tuple(targets), master_seed=SEED_TABLE,
        grids={"lpd": Grid(method="lpd", lams=LPD_SUBGRID)},
    )
    aggs = aggregate_rows(run_experiment(config).rows, config.methods)
    misses = []
    for agg in aggs:
        target, tol = targets[agg.method]
        _detail("a01", f"{agg.method}: mean {agg.mean_error:.4f} "
                       f"(want {target} +- {tol}, lpd grid {LPD_SUBGRID})")
        if not abs(agg.mean_error - target) <= tol:
            misses.append(agg.method)
    assert not misses, f"mean errors off target for {misses}"


# --------------------------------------------------------------------------
# a02: sparser block model, strict ordering of the five rules


def test_a02_model3_method_ordering():
    order = ("opt", "lpd", "slda2", "glda", "nsc")
    config = ExperimentConfig(
        model_id=3, p=300, k=3, n_train=450, n_test=450, reps=10,
        cv_folds=5, methods=order, master_seed=SEED_ORDERING,
    )
    aggs = {a.method: a for a in
            aggregate_rows(run_experiment(config).rows, config.methods)}
    for method in order:
        _detail("a02", f"{method}: mean {aggs[method].mean_error:.4f} "
                       f"sd {aggs[method].sd_error:.4f}")
    for low, high in zip(order, order[1:]):
        a, b = aggs[low], aggs[high]
        gap = b.mean_error - a.mean_error
        combined = math.hypot(a.sd_error / math.sqrt(a.reps_used),
                              b.sd_error / math.sqrt(b.reps_used))
        _detail("a02", f"{low} < {high}: gap {gap:.4f} vs 2 se {2 * combined:.4f}")
        assert gap > 2.0 * combined, f"{low} not separated from {high}"


# --------------------------------------------------------------------------
# a03: two-class optimal risk equals the Gaussian tail of half the separation


def test_a03_two_class_rate_matches_gaussian_tail():
    worst = 0.0
    for i in range(20):
        rng = rng_stream(SEED_RATES, i)
        p = 2 + int(rng.uniforms(1)[0] * 9)
        sigma = _random_covariance(rng, p)
        direction = rng.normals(p)
        separation = 0.8 + 2.0 * rng.uniforms(1)[0]
        quad = direction @ np.linalg.solve(sigma, direction)
        shift = direction * (separation / math.sqrt(quad))
        base = rng.normals(p)
        population = make_population(np.stack([base, base + shift]), sigma)
        est, se = r_opt(population, 200000, rng_stream(SEED_RATES, 1000 + i))
        want = std_normal_cdf(-separation / 2.0)
        worst = max(worst, abs(est - want) / se)
        assert abs(est - want) <= 4.0 * se, (
            f"instance {i}: estimate {est:.5f} vs tail {want:.5f} (se {se:.2e})"
        )
    _detail("a03", f"20 instances, worst deviation {worst:.2f} se (limit 4)")


# --------------------------------------------------------------------------
# a04: per-pair bound dominates the Monte Carlo excess risk; exact at K = 2


def test_a04_excess_risk_bound_dominates_gap():
    checks = equality_checks = 0
    for i in range(20):
        rng = rng_stream(SEED_BOUND, i)
        k = (2, 3, 4)[i % 3]
        n = (100, 400)[i % 2]
        p = 5 + int(rng.uniforms(1)[0] * 16)
        sigma = _random_covariance(rng, p)
        means = rng.normals(k * p).reshape(k, p) * 0.8
        population = make_population(means, sigma)
        train = sample_dataset(
            population, near_balanced_counts(n, k), rng_stream(SEED_BOUND, 100 + i)
        )
        mid = default_grid("slda2", train).combos()
        for j, (method, params) in enumerate((
            ("glda", {}),
            ("slda2", mid[len(mid) // 2]),
            ("lpd", {"lam": 0.3}),
        )):
            rule = fit(method, train, params)
            report = bound_report(
                population, rule, 100000, rng_stream(SEED_BOUND, 1000 + 10 * i + j)
            )
            checks += 1
            assert report.bound >= report.gap_est - 3.0 * report.gap_se, (
                f"instance {i} {method}: bound {report.bound:.5f} below "
                f"gap {report.gap_est:.5f} - 3 x {report.gap_se:.2e}"
            )
            if k == 2:
                check = two_class_gap_check(
                    pair_geometry(population, rule), 100000,
                    rng_stream(SEED_BOUND, 5000 + 10 * i + j),
                )
                equality_checks += 1
                assert abs(check.residual) <= 3.0 * check.joint_se, (
                    f"instance {i} {method}: residual {check.residual:.2e} "
                    f"vs 3 x {check.joint_se:.2e}"
                )
    _detail("a04", f"{checks} bound checks, {equality_checks} two-class "
                   "equality checks, all within 3 se")


# --------------------------------------------------------------------------
# a05: simplex solver against vertex enumeration; l1 recovery at A = I


def _vertex_optimum(c, a_ub, b_ub):
    """Best objective over basic feasible points, or None when empty."""
    m, q = a_ub.shape
    rows_a = np.vstack([a_ub, -np.eye(q)])
    rows_b = np.concatenate([b_ub, np.zeros(q)])
    best = None
    for picks in combinations(range(m + q), q):
        sub = rows_a[list(picks)]
        if abs(np.linalg.det(sub)) < 1e-10:
            continue
        z = np.linalg.solve(sub, rows_b[list(picks)])
        if np.all(rows_a @ z <= rows_b + 1e-9):
            value = float(c @ z)
            best = value if best is None else min(best, value)
    return best


def test_a05_lp_solver_agrees_with_oracles():
    feasible = 0
    for i in range(200):
        rng = rng_stream(SEED_LP, i)
        q = 1 + int(rng.uniforms(1)[0] * 6)
        m = 1 + int(rng.uniforms(1)[0] * 6)
        a = rng.normals(m * q).reshape(m, q)
        c = np.abs(rng.normals(q)) + 0.1
        if rng.uniforms(1)[0] < 0.5:
            b = a @ np.abs(rng.normals(q)) + 0.5 * np.abs(rng.normals(m))
        else:
            b = rng.normals(m)
        solution = solve_standard(StandardLp(c=c, a_ub=a, b_ub=b))
        best = _vertex_optimum(c, a, b)
        if best is None:
            assert solution.status == "infeasible", f"instance {i}"
        else:
            feasible += 1
            assert solution.status == "optimal", f"instance {i}"
            assert abs(solution.objective - best) <= 1e-8, (
                f"instance {i}: {solution.objective} vs {best}"
            )
    assert feasible >= 100

    for i in range(200):
        rng = rng_stream(SEED_LP, 1000 + i)
        q = 1 + int(rng.uniforms(1)[0] * 8)
        d = 2.0 * rng.normals(q)
        lam = 1.5 * rng.uniforms(1)[0]
        status, beta = solve_l1_linf(np.eye(q), d, lam)
        want = np.sign(d) * np.maximum(np.abs(d) - lam, 0.0)
        assert status == "optimal"
        assert np.max(np.abs(beta - want)) <= 1e-8, f"instance {i}"
    _detail("a05", f"200 simplex instances ({feasible} feasible) and "
                   "200 soft-threshold instances agree")


# --------------------------------------------------------------------------
# a06: numerical foundations (pseudoinverse, Cholesky, bivariate normal)


def test_a06_numerics_foundations():
    for i in range(100):
        rng = rng_stream(SEED_NUM, i)
        p = 1 + int(rng.uniforms(1)[0] * 8)
        rank = int(rng.uniforms(1)[0] * (p + 1))
        basis, _ = np.linalg.qr(rng.normals(p * p).reshape(p, p))
        values = np.zeros(p)
        values[:rank] = rng.normals(rank)
        s = (basis * values) @ basis.T
        x = pinv(s)
        residual = max(
            np.max(np.abs(s @ x @ s - s)),
            np.max(np.abs(x @ s @ x - x)),
            np.max(np.abs((s @ x).T - s @ x)),
            np.max(np.abs((x @ s).T - x @ s)),
        )
        assert residual < 1e-8, f"instance {i} rank {rank}: {residual:.2e}"

    for i in range(50):
        rng = rng_stream(SEED_NUM, 500 + i)
        p = 1 + int(rng.uniforms(1)[0] * 10)
        s = _random_covariance(rng, p)
        lower = cholesky(s)
        assert np.max(np.abs(lower @ lower.T - s)) < 1e-10, f"instance {i}"

    for rho in np.arange(-0.9, 0.91, 0.1):
        want = 0.25 + math.asin(rho) / (2.0 * math.pi)
        assert abs(bvn_lower_cdf(0.0, 0.0, rho) - want) < 1e-7, f"rho {rho:.1f}"

    draws = 10_000_000
    chunk = 2_000_000
    worst = 0.0
    for i in range(50):
        rng = rng_stream(SEED_NUM, 1000 + i)
        h, k = 3.0 * rng.uniforms(2) - 1.0
        rho = 1.7 * rng.uniforms(1)[0] - 0.85
        exact = bvn_lower_cdf(h, k, rho)
        mc = rng_stream(SEED_NUM, 2000 + i)
        hits = 0
        for _ in range(draws // chunk):
            z = mc.normals(2 * chunk)
            first, second = z[:chunk], z[chunk:]
            other = rho * first + math.sqrt(1.0 - rho * rho) * second
            hits += int(np.count_nonzero((first < h) & (other < k)))
        estimate = hits / draws
        # the exact probability gives a nonzero se even in deep tails
        se = math.sqrt(exact * (1.0 - exact) / draws)
        worst = max(worst, abs(estimate - exact) / se)
        assert abs(estimate - exact) <= 3.0 * se, (
            f"triple {i} (h={h:.3f}, k={k:.3f}, rho={rho:.3f}): "
            f"exact {exact:.6f} vs mc {estimate:.6f}"
        )
    _detail("a06", f"pinv, cholesky, orthant identity ok; 50 bivariate "
                   f"mc triples worst {worst:.2f} se (limit 3)")


# --------------------------------------------------------------------------
# a07: excess-risk ratio of the thresholded rule shrinks along a sample grid


def test_a07_convergence_of_thresholded_rule():
    res = convergence_experiment(
        method="slda2", model_id=3, p=100, k=3,
        n_grid=(200, 400, 800, 1600), reps=10, master_seed=SEED_CONVERGENCE,
    )
    ratios = [f"{v:.4f}" for v in res.mean_ratios]
    _detail("a07", f"mean ratios {ratios}, spearman {res.spearman:.2f}")
    assert res.spearman <= -0.8
    assert res.mean_ratios[-1] < 0.5


# --------------------------------------------------------------------------
# a08: sparsity and rate quantities against inline arithmetic


def test_a08_sparsity_and_rate_quantities():
    model = make_sim_model(1, 300, 3)
    _, m_min, m_max = mahalanobis_matrix(model)
    rates = sparsity_and_rates(model, 450)

    # ten unit-magnitude mean differences per pair, orthogonal to the
    # all-ones direction, under compound symmetry with rho = 1/2
    want_m = 10.0 / (1.0 - 0.5)
    want_d_gp = 10.0  # sum of |delta_k|^(2g) at g = 1/2
    want_s_n = (
        300.0 * math.sqrt(math.log(300.0) / 450.0)
        + (3.0 / math.sqrt(want_m)) * math.sqrt(300.0 / 450.0)
    )
    assert abs(want_s_n - 34.322809454969104) < 1e-12  # frozen oracle value

    _detail("a08", f"m_min {m_min:.8f} m_max {m_max:.8f} "
                   f"d_gp {rates.d_gp:.8f} s_n {rates.s_n:.8f}")
    assert abs(m_min - want_m) <= 1e-6
    assert abs(m_max - want_m) <= 1e-6
    assert abs(rates.d_gp - want_d_gp) <= 1e-6
    assert abs(rates.s_n - want_s_n) <= 1e-6


# --------------------------------------------------------------------------
# a09: two-point mixture example limits along the dimension grid


def test_a09_tightness_example_limits():
    grid = range(2, 21, 2)
    examples = [tightness_example_bounds(float(d), 4.0 / math.sqrt(d)) for d in grid]
    ratios = [ex.upper_ratio_bound for ex in examples]
    mixings = [ex.mixing_bound for ex in examples]
    _detail("a09", f"ratio-1 at d=20: {ratios[-1] - 1.0:.3e}; "
                   f"mixing at d=20: {mixings[-1]:.6e} "
                   f"(threshold {math.exp(-20.0) * 1.01:.6e})")
    assert ratios[0] > 1.0
    # the ratio rounds to exactly 1.0 from d = 18 on, so non-strict there
    assert all(a >= b for a, b in zip(ratios, ratios[1:]))
    assert ratios[-1] - 1.0 < 1e-10
    assert all(m > 0.0 for m in mixings)
    assert all(a > b for a, b in zip(mixings, mixings[1:]))
    # on the eps = 4 / sqrt(d) schedule the mixing term is exp(-2 sqrt(d)),
    # which reaches the e^-20 scale only near d = 100; at the d = 20 grid
    # endpoint it sits at 1.30e-4
    assert mixings[-1] < math.exp(-20.0) * 1.01


def test_tightness_example_reaches_deep_mixing_at_d100():
    ex = tightness_example_bounds(100.0, 0.4)
    assert ex.mixing_bound == pytest.approx(math.exp(-20.0), rel=1e-12)
    assert ex.upper_ratio_bound - 1.0 < 1e-10


# --------------------------------------------------------------------------
# a10: simulate runs are byte-identical across repeats and worker counts


def test_a10_simulate_is_reproducible_bytewise(tmp_path):
    base = [
        "hdlda", "simulate", "--model", "1", "--p", "15", "--k", "3",
        "--reps", "6", "--n-train", "30", "--n-test", "30",
        "--methods", "opt,glda,slda1,slda2,lpd,nsc",
        "--lpd-grid", "0.3,0.5", "--seed", "17",
    ]
    outputs = {}
    for tag, workers in (("first", 1), ("again", 1), ("wide", 8)):
        out = tmp_path / f"{tag}.csv"
        proc = subprocess.run(
            base + ["--workers", str(workers), "--out", str(out)],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0, proc.stderr
        outputs[tag] = (
            out.read_bytes(),
            (tmp_path / f"{tag}.aggregate.csv").read_bytes(),
        )
    assert outputs["first"] == outputs["again"], "repeat run differs"
    assert outputs["first"] == outputs["wide"], "worker count changed bytes"
    _detail("a10", "results and aggregate files byte-identical across "
                   "a repeat run and 1 vs 8 workers")
