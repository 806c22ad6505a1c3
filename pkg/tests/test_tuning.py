"""Grids, stratified folds, and the cross-validation search."""

import numpy as np
import pytest

from hdlda.errors import AllCombosInvalid, ClassTooSmall
from hdlda.numerics import rng_stream
from hdlda.population import make_sample, make_sim_model, sample_dataset
from hdlda.tuning import (
    LPD_LAMBDAS,
    NSC_GRID_SIZE,
    SLDA2_EPS,
    SLDA_M1,
    SLDA_M2,
    Grid,
    default_grid,
    grid_search,
    stratified_folds,
)


def test_default_grid_values():
    assert LPD_LAMBDAS == tuple(round(0.2 + 0.05 * i, 10) for i in range(11))
    assert SLDA_M1 == tuple(10.0**e for e in range(-5, 1))
    assert SLDA_M2 == tuple(10.0**e for e in range(-7, 1))
    assert SLDA2_EPS == tuple(10.0**e for e in range(-5, 0))
    assert len(SLDA_M1) == 6 and len(SLDA_M2) == 8 and len(SLDA2_EPS) == 5


def test_combo_orderings():
    g = Grid(method="slda2", m1s=(1.0, 2.0), m2s=(0.1, 0.2), epss=(0.01, 0.02))
    combos = g.combos()
    assert len(combos) == 8
    # m1 outer, m2 inner, eps innermost
    assert combos[0] == {"m1": 1.0, "m2": 0.1, "alpha": 0.3, "eps": 0.01}
    assert combos[1] == {"m1": 1.0, "m2": 0.1, "alpha": 0.3, "eps": 0.02}
    assert combos[2] == {"m1": 1.0, "m2": 0.2, "alpha": 0.3, "eps": 0.01}
    assert combos[4] == {"m1": 2.0, "m2": 0.1, "alpha": 0.3, "eps": 0.01}
    lpd = Grid(method="lpd", lams=(0.2, 0.3)).combos()
    assert lpd == ({"lam": 0.2}, {"lam": 0.3})
    nsc = Grid(method="nsc", deltas=(0.0, 1.0)).combos()
    assert nsc == ({"delta": 0.0}, {"delta": 1.0})


def test_grid_validation():
    with pytest.raises(ValueError, match="needs values"):
        Grid(method="lpd")
    with pytest.raises(ValueError, match="must be positive"):
        Grid(method="lpd", lams=(0.2, 0.0))
    with pytest.raises(ValueError, match="must be nonnegative"):
        Grid(method="nsc", deltas=(-0.1,))
    Grid(method="nsc", deltas=(0.0,))  # zero shrinkage is a legal choice
    with pytest.raises(ValueError, match="no tuning grid"):
        Grid(method="glda")


def test_default_nsc_grid_spans_observed_deviations():
    data = sample_dataset(make_sim_model(1, 20, 2), 30, rng_stream(20, 0))
    grid = default_grid("nsc", data)
    assert len(grid.deltas) == NSC_GRID_SIZE
    assert grid.deltas[0] == 0.0
    assert np.all(np.diff(grid.deltas) > 0.0)
    # the top of the grid shrinks every deviation to zero
    from hdlda.classifiers import fit

    rule = fit("nsc", data, {"delta": grid.deltas[-1]})
    assert np.max(np.abs(rule.shrunken_centroids - rule.overall_centroid)) <= 1e-12


def test_stratified_folds_balance_and_error():
    labels = np.array([1] * 7 + [2] * 7)
    ids = stratified_folds(labels, 5, rng_stream(21, 0))
    for cls in (1, 2):
        sizes = np.bincount(ids[labels == cls], minlength=5)
        assert sorted(sizes.tolist()) == [1, 1, 1, 2, 2]
    with pytest.raises(ClassTooSmall, match="class 2 has 4"):
        stratified_folds(np.array([1] * 9 + [2] * 4), 5, rng_stream(21, 0))
    with pytest.raises(ValueError):
        stratified_folds(labels, 1, rng_stream(21, 0))


def test_stratified_folds_deterministic_and_stream_dependent():
    labels = np.array([1, 2] * 20)
    a = stratified_folds(labels, 4, rng_stream(22, 0))
    b = stratified_folds(labels, 4, rng_stream(22, 0))
    c = stratified_folds(labels, 4, rng_stream(22, 1))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def _small_data(seed=23):
    return sample_dataset(make_sim_model(1, 15, 3), 20, rng_stream(seed, 0))


def test_grid_search_result_shape_and_determinism():
    data = _small_data()
    grid = Grid(method="lpd", lams=(0.3, 0.5, 0.7))
    a = grid_search("lpd", data, grid, 5, rng=rng_stream(24, 0))
    b = grid_search("lpd", data, grid, 5, rng=rng_stream(24, 0))
    assert a.best_params == b.best_params
    assert np.array_equal(a.cv_error_table, b.cv_error_table)
    assert a.combos == grid.combos()
    assert a.valid.all()
    assert a.best_error == np.nanmin(a.cv_error_table)
    assert a.fold_assignments.shape == (data.n,)


def test_grid_search_accepts_external_folds():
    data = _small_data()
    fold_ids = stratified_folds(data.labels, 5, rng_stream(25, 0))
    grid = Grid(method="nsc", deltas=(0.0, 0.5, 1.0))
    res = grid_search("nsc", data, grid, 5, fold_ids=fold_ids)
    assert np.array_equal(res.fold_assignments, fold_ids)
    again = grid_search("nsc", data, grid, 5, fold_ids=fold_ids)
    assert res.best_params == again.best_params
    with pytest.raises(ValueError, match="length does not match"):
        grid_search("nsc", data, grid, 5, fold_ids=fold_ids[:-1])
    with pytest.raises(ValueError, match="lie in 0"):
        grid_search("nsc", data, grid, 5, fold_ids=fold_ids + 5)
    with pytest.raises(ValueError, match="either rng or fold_ids"):
        grid_search("nsc", data, grid, 5)


def test_grid_search_tie_goes_to_earliest_combo():
    data = _small_data()
    fold_ids = stratified_folds(data.labels, 5, rng_stream(26, 0))
    # duplicated values give exactly equal CV errors; the first must win
    grid = Grid(method="nsc", deltas=(0.4, 0.4, 0.4))
    res = grid_search("nsc", data, grid, 5, fold_ids=fold_ids)
    assert res.cv_error_table[0] == res.cv_error_table[1] == res.cv_error_table[2]
    assert res.best_params == {"delta": 0.4}
    assert int(np.argmin(np.where(res.valid, res.cv_error_table, np.inf))) == 0


def test_grid_search_excludes_invalid_combos():
    # a rank-deficient pooled covariance makes tiny lambdas infeasible
    x = np.array(
        [
            [1.0, 2.0], [3.0, 4.0], [1.5, 2.5], [2.5, 3.5], [2.0, 3.0],
            [0.0, 0.0], [2.0, 2.0], [0.5, 0.5], [1.5, 1.5], [1.0, 1.0],
        ]
    )
    data = make_sample(x, [1] * 5 + [2] * 5)
    fold_ids = np.array([0, 1, 2, 3, 4] * 2)
    grid = Grid(method="lpd", lams=(1e-9, 5.0))
    res = grid_search("lpd", data, grid, 5, fold_ids=fold_ids)
    assert res.valid.tolist() == [False, True]
    assert np.isnan(res.cv_error_table[0])
    assert res.best_params == {"lam": 5.0}
    with pytest.raises(AllCombosInvalid):
        grid_search(
            "lpd", data, Grid(method="lpd", lams=(1e-9,)), 5, fold_ids=fold_ids
        )


def test_grid_search_rejects_mismatched_grid():
    data = _small_data()
    with pytest.raises(ValueError, match="grid is for"):
        grid_search("nsc", data, Grid(method="lpd", lams=(0.3,)), 5,
                    rng=rng_stream(0, 0))


def test_grid_search_tunes_toward_generalization():
    # with a clearly separated design the chosen shrinkage should not be
    # the degenerate top of the grid
    data = sample_dataset(make_sim_model(1, 15, 3), 40, rng_stream(27, 0))
    grid = default_grid("nsc", data)
    res = grid_search("nsc", data, grid, 5, rng=rng_stream(27, 1))
    assert res.best_params["delta"] < grid.deltas[-1]
    assert res.best_error <= np.nanmean(res.cv_error_table)
