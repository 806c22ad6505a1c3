"""Fitted classification rules sharing one prediction interface.

Every rule maps an (n, p) batch to integer labels 1..k, breaking score
ties toward the lowest class index. Rules are plain frozen dataclasses so
they pickle cleanly for process pools and serialize to JSON for the CLI.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, LpInfeasible, NotPositiveDefinite
from .estimators import (
    FittedStats,
    fit_stats,
    lpd_directions,
    threshold_cov,
    threshold_deltas,
)
from .numerics import RngStream, cholesky, pinv
from .population import LabeledSample, PopulationModel, make_population

TUNABLE_METHODS = ("slda1", "slda2", "lpd", "nsc")
FITTED_METHODS = ("glda",) + TUNABLE_METHODS
ALL_METHODS = ("opt",) + FITTED_METHODS


def _rows(x: np.ndarray, p: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != p:
        raise DimensionMismatch(f"expected {p} features, got shape {x.shape}")
    return x, single


def _nearest_center(x: np.ndarray, centers: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """argmin_i (x - c_i)' omega (x - c_i), expanded to a linear score."""
    w = centers @ omega
    const = np.einsum("ij,ij->i", w, centers)
    scores = x @ (-2.0 * w.T) + const
    return np.argmin(scores, axis=1).astype(np.int64) + 1


@dataclass(frozen=True)
class OptRule:
    """Population-optimal rule; wraps the true means and precision."""

    means: np.ndarray
    sigma_inv: np.ndarray

    method = "opt"

    @property
    def k(self) -> int:
        return self.means.shape[0]

    @property
    def p(self) -> int:
        return self.means.shape[1]

    def predict(self, x: np.ndarray) -> np.ndarray:
        x, single = _rows(x, self.p)
        labels = _nearest_center(x, self.means, self.sigma_inv)
        return labels[0] if single else labels


@dataclass(frozen=True)
class GldaRule:
    """Pseudoinverse LDA: nearest class mean in the pinv(sigma_hat) metric."""

    class_means: np.ndarray
    omega: np.ndarray

    method = "glda"

    @property
    def k(self) -> int:
        return self.class_means.shape[0]

    @property
    def p(self) -> int:
        return self.class_means.shape[1]

    def predict(self, x: np.ndarray) -> np.ndarray:
        x, single = _rows(x, self.p)
        labels = _nearest_center(x, self.class_means, self.omega)
        return labels[0] if single else labels


@dataclass(frozen=True)
class SldaRule:
    """Thresholding-based sparse LDA.

    centers[i] = xbar_1 + thresholded contrast of class i against class 1,
    omega inverts the thresholded covariance (pseudoinverse for variant 1,
    ridge-regularized inverse for variant 2). Prediction is nearest center
    in the omega metric, which reproduces the pairwise rule wherever the
    minimizer is unique.
    """

    centers: np.ndarray
    omega: np.ndarray
    variant: int  # 1 or 2
    eps: float  # ridge used by variant 2; 0.0 for variant 1

    @property
    def method(self) -> str:
        return f"slda{self.variant}"

    @property
    def k(self) -> int:
        return self.centers.shape[0]

    @property
    def p(self) -> int:
        return self.centers.shape[1]

    def predict(self, x: np.ndarray) -> np.ndarray:
        x, single = _rows(x, self.p)
        labels = _nearest_center(x, self.centers, self.omega)
        return labels[0] if single else labels


@dataclass(frozen=True)
class LpdRule:
    """l1-direction rule with pairwise duels.

    Directions are differences of the per-class LP solutions against
    class 1; the duel of classes j and i uses the midpoint of their means.
    A point gets the class that wins all duels; failing that, most duel
    wins, then the smallest duel-score sum, then the lowest index.
    """

    betas_to_1: np.ndarray
    class_means: np.ndarray
    lam: float

    method = "lpd"

    @property
    def k(self) -> int:
        return self.class_means.shape[0]

    @property
    def p(self) -> int:
        return self.class_means.shape[1]

    def predict(self, x: np.ndarray) -> np.ndarray:
        x, single = _rows(x, self.p)
        n, k = x.shape[0], self.k
        proj = x @ self.betas_to_1.T  # (n, k)
        mean_proj = self.class_means @ self.betas_to_1.T  # (k rows, k directions)
        # duel[a, j, i] = (beta_j - beta_i)' (x_a - (m_j + m_i) / 2)
        duel = np.empty((n, k, k))
        for j in range(k):
            for i in range(k):
                offset = 0.5 * (
                    mean_proj[j, j] - mean_proj[j, i]
                    + mean_proj[i, j] - mean_proj[i, i]
                )
                duel[:, j, i] = proj[:, j] - proj[:, i] - offset
        # column i counts duels class i wins; the zero diagonal never counts
        wins = (duel < 0.0).sum(axis=1)
        margins = duel.sum(axis=1)
        top = wins.max(axis=1, keepdims=True)
        contenders = wins == top
        masked = np.where(contenders, margins, np.inf)
        lead = masked.min(axis=1, keepdims=True)
        labels = (contenders & (masked == lead)).argmax(axis=1).astype(np.int64) + 1
        return labels[0] if single else labels


@dataclass(frozen=True)
class NscRule:
    """Nearest shrunken centroid baseline with log-prior correction."""

    shrunken_centroids: np.ndarray  # (k, p)
    overall_centroid: np.ndarray  # (p,)
    s: np.ndarray  # (p,) pooled within-class sd, divisor n - k
    s0: float
    priors: np.ndarray  # (k,)
    delta: float

    method = "nsc"

    @property
    def k(self) -> int:
        return self.shrunken_centroids.shape[0]

    @property
    def p(self) -> int:
        return self.shrunken_centroids.shape[1]

    def predict(self, x: np.ndarray) -> np.ndarray:
        x, single = _rows(x, self.p)
        inv_var = 1.0 / (self.s + self.s0) ** 2
        w = self.shrunken_centroids * inv_var
        const = np.einsum(
            "ij,ij->i", w, self.shrunken_centroids
        ) - 2.0 * np.log(self.priors)
        scores = x @ (-2.0 * w.T) + const
        labels = np.argmin(scores, axis=1).astype(np.int64) + 1
        return labels[0] if single else labels


ClassifierModel = OptRule | GldaRule | SldaRule | LpdRule | NscRule


@dataclass(frozen=True)
class EvalReport:
    error_rate: float
    per_class_errors: np.ndarray  # (k,)
    confusion: np.ndarray  # (k, k); rows true, columns predicted


def make_opt_rule(model: PopulationModel) -> OptRule:
    return OptRule(means=model.means, sigma_inv=model.sigma_inv)


def fit_from_stats(method: str, stats: FittedStats, params: dict) -> ClassifierModel:
    """Fit a rule from precomputed pooled statistics.

    This is the entry point grid search uses so per-fold statistics are
    shared across the whole hyperparameter grid.
    """
    if method == "glda":
        return GldaRule(class_means=stats.class_means, omega=pinv(stats.sigma_hat))
    if method in ("slda1", "slda2"):
        variant = 1 if method == "slda1" else 2
        tc = threshold_cov(stats, params["m1"])
        td = threshold_deltas(stats, params["m2"], params.get("alpha", 0.3))
        centers = stats.class_means[0] + td.deltas_to_1
        if variant == 1:
            omega = pinv(tc.sigma_tilde)
            eps = 0.0
        else:
            eps = float(params["eps"])
            ridged = tc.sigma_tilde + eps * np.eye(stats.p)
            try:
                lower = cholesky(ridged)
                ident = np.eye(stats.p)
                half = np.linalg.solve(lower, ident)
                omega = np.linalg.solve(lower.T, half)
                omega = 0.5 * (omega + omega.T)
            except NotPositiveDefinite:
                # thresholding can leave the ridged matrix indefinite
                omega = pinv(ridged)
        return SldaRule(centers=centers, omega=omega, variant=variant, eps=eps)
    if method == "lpd":
        dirs = lpd_directions(stats, params["lam"])
        if not bool(dirs.feasible.all()):
            bad = np.flatnonzero(~dirs.feasible) + 1
            raise LpInfeasible(
                f"no l1 direction for classes {bad.tolist()} at lam={params['lam']}"
            )
        return LpdRule(
            betas_to_1=dirs.betas_to_1,
            class_means=stats.class_means,
            lam=float(params["lam"]),
        )
    if method == "nsc":
        return _fit_nsc(stats, float(params["delta"]))
    raise ValueError(f"unknown method {method!r}")


def _fit_nsc(stats: FittedStats, delta: float) -> NscRule:
    d, scale, overall = nsc_statistics(stats)
    shrunk = np.sign(d) * np.maximum(np.abs(d) - delta, 0.0)
    centroids = overall + scale * shrunk
    s = _nsc_s(stats)
    return NscRule(
        shrunken_centroids=centroids,
        overall_centroid=overall,
        s=s,
        s0=float(np.median(s)),
        priors=stats.counts / stats.n,
        delta=delta,
    )


def _nsc_s(stats: FittedStats) -> np.ndarray:
    # pooled within-class sd with divisor n - k; sigma_hat uses divisor n
    return np.sqrt(np.diag(stats.sigma_hat) * stats.n / (stats.n - stats.k))


def nsc_statistics(stats: FittedStats) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Standardized centroid deviations d_ik, their scale rows, overall mean.

    d_ik = (xbar_ik - xbar_k) / (m_i (s_k + s0)) with m_i = sqrt(1/n_i - 1/n);
    the scale rows m_i (s_k + s0) reconstruct centroids from shrunk d values.
    """
    s = _nsc_s(stats)
    s0 = float(np.median(s))
    overall = (stats.counts @ stats.class_means) / stats.n
    m = np.sqrt(1.0 / stats.counts - 1.0 / stats.n)
    scale = m[:, None] * (s + s0)[None, :]
    d = (stats.class_means - overall) / scale
    return d, scale, overall


def fit(method: str, sample: LabeledSample, params: dict | None = None) -> ClassifierModel:
    """Fit one of the data-driven rules on a labeled sample."""
    if method == "opt":
        raise ValueError("the optimal rule needs a population, not a sample; "
                         "use make_opt_rule")
    return fit_from_stats(method, fit_stats(sample), params or {})


def predict(model: ClassifierModel, x: np.ndarray) -> np.ndarray:
    """Label a vector or an (n, p) batch with the fitted rule."""
    return model.predict(x)


def evaluate(model: ClassifierModel, sample: LabeledSample) -> EvalReport:
    """Empirical error of a fitted rule on a labeled sample."""
    predicted = model.predict(sample.x)
    k = sample.k
    confusion = np.zeros((k, k), dtype=np.int64)
    np.add.at(confusion, (sample.labels - 1, predicted - 1), 1)
    correct = np.trace(confusion)
    row_totals = confusion.sum(axis=1)
    per_class = 1.0 - np.diag(confusion) / row_totals
    return EvalReport(
        error_rate=float(1.0 - correct / sample.n),
        per_class_errors=per_class,
        confusion=confusion,
    )


def conditional_error(
    model: ClassifierModel,
    truth: PopulationModel,
    mc_samples: int,
    rng: RngStream,
) -> tuple[float, float]:
    """Misclassification rate of a fixed fitted rule under the true population.

    Stratified Monte Carlo with mc_samples // k draws per class; returns
    (estimate, standard error).
    """
    k, p = truth.k, truth.p
    per = mc_samples // k
    if per < 1:
        raise ValueError("mc_samples must be at least the number of classes")
    errors = 0
    for i in range(k):
        z = rng.normals(per * p).reshape(per, p)
        draws = truth.means[i] + z @ truth.chol.T
        errors += int(np.count_nonzero(model.predict(draws) != i + 1))
    total = per * k
    rate = errors / total
    return rate, float(np.sqrt(rate * (1.0 - rate) / total))


_ARRAY_FIELDS = {
    "opt": ("means", "sigma"),
    "glda": ("class_means", "omega"),
    "slda1": ("centers", "omega"),
    "slda2": ("centers", "omega"),
    "lpd": ("betas_to_1", "class_means"),
    "nsc": ("shrunken_centroids", "overall_centroid", "s", "priors"),
}


def model_to_dict(model: ClassifierModel, *, sigma: np.ndarray | None = None) -> dict:
    """JSON-ready dict for a fitted rule; numbers keep full double precision."""
    method = model.method
    out: dict = {"method": method, "k": model.k, "p": model.p}
    if isinstance(model, OptRule):
        if sigma is None:
            raise ValueError("serializing the optimal rule needs the covariance")
        out["means"] = model.means.tolist()
        out["sigma"] = sigma.tolist()
    elif isinstance(model, GldaRule):
        out["class_means"] = model.class_means.tolist()
        out["omega"] = model.omega.tolist()
    elif isinstance(model, SldaRule):
        out["centers"] = model.centers.tolist()
        out["omega"] = model.omega.tolist()
        out["eps"] = model.eps
    elif isinstance(model, LpdRule):
        out["betas_to_1"] = model.betas_to_1.tolist()
        out["class_means"] = model.class_means.tolist()
        out["lam"] = model.lam
    elif isinstance(model, NscRule):
        out["shrunken_centroids"] = model.shrunken_centroids.tolist()
        out["overall_centroid"] = model.overall_centroid.tolist()
        out["s"] = model.s.tolist()
        out["s0"] = model.s0
        out["priors"] = model.priors.tolist()
        out["delta"] = model.delta
    else:
        raise ValueError(f"cannot serialize {type(model).__name__}")
    return out


def model_from_dict(data: dict) -> ClassifierModel:
    """Rebuild a fitted rule from its JSON dict."""
    try:
        method = data["method"]
        if method == "opt":
            population = make_population(
                np.array(data["means"], dtype=np.float64),
                np.array(data["sigma"], dtype=np.float64),
            )
            return make_opt_rule(population)
        if method == "glda":
            return GldaRule(
                class_means=np.array(data["class_means"], dtype=np.float64),
                omega=np.array(data["omega"], dtype=np.float64),
            )
        if method in ("slda1", "slda2"):
            return SldaRule(
                centers=np.array(data["centers"], dtype=np.float64),
                omega=np.array(data["omega"], dtype=np.float64),
                variant=1 if method == "slda1" else 2,
                eps=float(data.get("eps", 0.0)),
            )
        if method == "lpd":
            return LpdRule(
                betas_to_1=np.array(data["betas_to_1"], dtype=np.float64),
                class_means=np.array(data["class_means"], dtype=np.float64),
                lam=float(data["lam"]),
            )
        if method == "nsc":
            return NscRule(
                shrunken_centroids=np.array(data["shrunken_centroids"], dtype=np.float64),
                overall_centroid=np.array(data["overall_centroid"], dtype=np.float64),
                s=np.array(data["s"], dtype=np.float64),
                s0=float(data["s0"]),
                priors=np.array(data["priors"], dtype=np.float64),
                delta=float(data["delta"]),
            )
        raise ValueError(f"unknown method {method!r}")
    except KeyError as exc:
        raise ValueError(f"model JSON is missing field {exc}") from exc


def save_model(model: ClassifierModel, path: str, *, sigma: np.ndarray | None = None) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(model_to_dict(model, sigma=sigma), handle)
        handle.write("\n")


def load_model(path: str) -> ClassifierModel:
    with open(path, encoding="utf-8") as handle:
        data = json.load(handle)
    if not isinstance(data, dict):
        raise ValueError("model JSON must be an object")
    return model_from_dict(data)
