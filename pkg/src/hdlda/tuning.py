"""Stratified k-fold cross-validation over fixed hyperparameter grids.

Grid iteration order is part of the contract because ties in mean
validation error go to the earliest combo: lam ascending for the l1
method; (m1 outer, m2 inner, eps innermost) all ascending for the
thresholding variants; delta ascending for the shrunken-centroid
baseline. Combos that fail to fit in any fold are excluded rather than
propagated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .classifiers import evaluate, fit_from_stats, nsc_statistics
from .errors import AllCombosInvalid, ClassTooSmall, HdldaError
from .estimators import fit_stats
from .numerics import RngStream
from .population import LabeledSample, make_sample

LPD_LAMBDAS = tuple(np.round(np.arange(0.2, 0.7001, 0.05), 10).tolist())
SLDA_M1 = tuple(10.0 ** e for e in range(-5, 1))
SLDA_M2 = tuple(10.0 ** e for e in range(-7, 1))
SLDA2_EPS = tuple(10.0 ** e for e in range(-5, 0))
SLDA_ALPHA = 0.3
NSC_GRID_SIZE = 30


@dataclass(frozen=True)
class Grid:
    """Candidate tuning values for one method."""

    method: str
    lams: tuple[float, ...] = ()
    m1s: tuple[float, ...] = ()
    m2s: tuple[float, ...] = ()
    epss: tuple[float, ...] = ()
    deltas: tuple[float, ...] = ()
    alpha: float = SLDA_ALPHA

    def __post_init__(self) -> None:
        active = self._active_lists()
        if any(len(values) == 0 for values in active.values()):
            missing = [name for name, v in active.items() if len(v) == 0]
            raise ValueError(f"grid for {self.method!r} needs values for {missing}")
        for name, values in active.items():
            lower = 0.0 if name == "deltas" else None
            for v in values:
                if lower is None and v <= 0.0:
                    raise ValueError(f"{name} values must be positive, got {v}")
                if lower is not None and v < lower:
                    raise ValueError(f"{name} values must be nonnegative, got {v}")

    def _active_lists(self) -> dict[str, tuple[float, ...]]:
        if self.method == "lpd":
            return {"lams": self.lams}
        if self.method == "slda1":
            return {"m1s": self.m1s, "m2s": self.m2s}
        if self.method == "slda2":
            return {"m1s": self.m1s, "m2s": self.m2s, "epss": self.epss}
        if self.method == "nsc":
            return {"deltas": self.deltas}
        raise ValueError(f"no tuning grid for method {self.method!r}")

    def combos(self) -> tuple[dict, ...]:
        """All parameter dicts in the documented iteration order."""
        if self.method == "lpd":
            return tuple({"lam": v} for v in self.lams)
        if self.method == "slda1":
            return tuple(
                {"m1": a, "m2": b, "alpha": self.alpha}
                for a in self.m1s
                for b in self.m2s
            )
        if self.method == "slda2":
            return tuple(
                {"m1": a, "m2": b, "alpha": self.alpha, "eps": e}
                for a in self.m1s
                for b in self.m2s
                for e in self.epss
            )
        if self.method == "nsc":
            return tuple({"delta": v} for v in self.deltas)
        raise ValueError(f"no tuning grid for method {self.method!r}")


def default_grid(method: str, data: LabeledSample) -> Grid:
    """The standard grid for a tunable method.

    The shrunken-centroid grid is data-dependent: thirty equally spaced
    thresholds from zero to the largest standardized centroid deviation
    of the full training sample.
    """
    if method == "lpd":
        return Grid(method="lpd", lams=LPD_LAMBDAS)
    if method == "slda1":
        return Grid(method="slda1", m1s=SLDA_M1, m2s=SLDA_M2)
    if method == "slda2":
        return Grid(method="slda2", m1s=SLDA_M1, m2s=SLDA_M2, epss=SLDA2_EPS)
    if method == "nsc":
        d, _, _ = nsc_statistics(fit_stats(data))
        d_max = float(np.abs(d).max())
        deltas = tuple(np.linspace(0.0, d_max, NSC_GRID_SIZE).tolist())
        return Grid(method="nsc", deltas=deltas)
    raise ValueError(f"no tuning grid for method {method!r}")


@dataclass(frozen=True)
class CvResult:
    method: str
    best_params: dict
    best_error: float
    cv_error_table: np.ndarray  # nan where the combo was invalid
    combos: tuple[dict, ...]
    valid: np.ndarray
    fold_assignments: np.ndarray


def stratified_folds(labels: np.ndarray, folds: int, rng: RngStream) -> np.ndarray:
    """Fold index in 0..folds-1 per observation, stratified by class.

    Indices within each class are shuffled and dealt round-robin, so
    per-class fold sizes differ by at most one.
    """
    labels = np.asarray(labels)
    if folds < 2:
        raise ValueError("folds must be at least 2")
    out = np.empty(labels.shape[0], dtype=np.int64)
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        if idx.size < folds:
            raise ClassTooSmall(
                f"class {int(cls)} has {idx.size} observations, fewer than "
                f"{folds} folds"
            )
        order = rng.permutation(idx.size)
        out[idx[order]] = np.arange(idx.size) % folds
    return out


def grid_search(
    method: str,
    data: LabeledSample,
    grid: Grid,
    folds: int,
    rng: RngStream | None = None,
    fold_ids: np.ndarray | None = None,
) -> CvResult:
    """Pick tuning values by stratified cross-validation.

    Folds come from rng via stratified_folds unless the caller passes an
    assignment directly (the experiment harness draws folds once per
    replication and shares them across methods). Per-fold pooled
    statistics are computed once and reused for every combo. A combo is
    invalid when fitting raises in any fold; invalid combos never win.
    Ties in mean validation error go to the earliest combo in grid order.
    """
    if grid.method != method:
        raise ValueError(f"grid is for {grid.method!r}, not {method!r}")
    if fold_ids is None:
        if rng is None:
            raise ValueError("grid_search needs either rng or fold_ids")
        fold_ids = stratified_folds(data.labels, folds, rng)
    else:
        fold_ids = np.asarray(fold_ids)
        if fold_ids.shape[0] != data.n:
            raise ValueError("fold_ids length does not match the sample")
        if fold_ids.min() < 0 or fold_ids.max() >= folds:
            raise ValueError("fold_ids must lie in 0..folds-1")
    split = []
    for f in range(folds):
        hold = fold_ids == f
        train = make_sample(data.x[~hold], data.labels[~hold], data.k)
        valid_sample = make_sample(data.x[hold], data.labels[hold], data.k)
        split.append((fit_stats(train), valid_sample))

    combos = grid.combos()
    table = np.full(len(combos), np.nan)
    valid = np.zeros(len(combos), dtype=bool)
    for pos, params in enumerate(combos):
        fold_errors = []
        for stats, valid_sample in split:
            try:
                model = fit_from_stats(method, stats, params)
            except HdldaError:
                fold_errors = None
                break
            fold_errors.append(evaluate(model, valid_sample).error_rate)
        if fold_errors is not None:
            table[pos] = float(np.mean(fold_errors))
            valid[pos] = True

    if not valid.any():
        raise AllCombosInvalid(
            f"every combo in the {method} grid failed to fit in some fold"
        )
    best = int(np.argmin(np.where(valid, table, np.inf)))
    return CvResult(
        method=method,
        best_params=combos[best],
        best_error=float(table[best]),
        cv_error_table=table,
        combos=combos,
        valid=valid,
        fold_assignments=fold_ids,
    )
