"""Gaussian class-conditional populations: construction, sampling, oracle rule.

A population is K >= 2 Gaussian classes with distinct means and one shared
covariance, uniform priors. The three standard simulation designs place
s0 unit coordinates per class mean on disjoint blocks and use compound
symmetry, block compound symmetry, or an AR(1) covariance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionTooSmall, EmptyClass
from .numerics import RngStream, cholesky, std_normal_cdf, sym_eigen

_SIM_BLOCK_SIZES = {1: 5, 2: 3, 3: 10}


@dataclass(frozen=True)
class PopulationModel:
    """Class means, shared covariance, and cached factorizations."""

    means: np.ndarray  # (k, p)
    sigma: np.ndarray  # (p, p)
    chol: np.ndarray = field(repr=False)
    sigma_inv: np.ndarray = field(repr=False)
    sigma_half: np.ndarray = field(repr=False)
    sigma_inv_half: np.ndarray = field(repr=False)
    eigenvalues: np.ndarray = field(repr=False)  # descending

    @property
    def k(self) -> int:
        return self.means.shape[0]

    @property
    def p(self) -> int:
        return self.means.shape[1]


@dataclass(frozen=True)
class ConditionReport:
    """Witnesses for the regularity conditions a population satisfies."""

    lambda_min: float
    lambda_max: float
    c0_witness: float  # max(lambda_max, 1 / lambda_min)
    m_min: float
    m_max: float
    min_class_count_ratio: float | None  # n / (K * min class count), if counts given
    k_le_p_plus_1: bool


@dataclass(frozen=True)
class LabeledSample:
    """Feature rows with integer class labels 1..k, every class present."""

    x: np.ndarray  # (n, p)
    labels: np.ndarray  # (n,) int64
    k: int
    counts: np.ndarray  # (k,)

    @property
    def n(self) -> int:
        return self.labels.size

    @property
    def p(self) -> int:
        return self.x.shape[1]


def make_sample(x: np.ndarray, labels: np.ndarray, k: int | None = None) -> LabeledSample:
    """Validate and wrap raw arrays as a LabeledSample."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or labels.ndim != 1 or x.shape[0] != labels.size:
        raise ValueError("x must be (n, p) with one label per row")
    if k is None:
        k = int(labels.max(initial=0))
    if k < 2:
        raise ValueError("need K >= 2 classes")
    if labels.min(initial=1) < 1 or labels.max(initial=1) > k:
        raise ValueError(f"labels must lie in 1..{k}")
    counts = np.bincount(labels, minlength=k + 1)[1:]
    if np.any(counts == 0):
        missing = int(np.flatnonzero(counts == 0)[0]) + 1
        raise EmptyClass(f"class {missing} has no observations")
    return LabeledSample(x=x, labels=labels, k=k, counts=counts)


def make_population(means: np.ndarray, sigma: np.ndarray) -> PopulationModel:
    """Build a population from raw means and covariance, caching factorizations."""
    means = np.ascontiguousarray(means, dtype=np.float64)
    sigma = np.ascontiguousarray(sigma, dtype=np.float64)
    if means.ndim != 2:
        raise ValueError("means must be a (k, p) matrix")
    k, p = means.shape
    if k < 2:
        raise ValueError("need K >= 2 classes")
    if sigma.shape != (p, p):
        raise ValueError(f"sigma must be ({p}, {p}) to match the means")
    for i in range(k):
        for j in range(i + 1, k):
            if np.array_equal(means[i], means[j]):
                raise ValueError(f"class means {i + 1} and {j + 1} coincide")
    chol = cholesky(sigma)  # also certifies positive definiteness
    eig = sym_eigen(sigma)
    inv_vals = 1.0 / eig.values
    sigma_inv = (eig.vectors * inv_vals) @ eig.vectors.T
    sigma_half = (eig.vectors * np.sqrt(eig.values)) @ eig.vectors.T
    sigma_inv_half = (eig.vectors * np.sqrt(inv_vals)) @ eig.vectors.T
    return PopulationModel(
        means=means,
        sigma=sigma,
        chol=chol,
        sigma_inv=0.5 * (sigma_inv + sigma_inv.T),
        sigma_half=0.5 * (sigma_half + sigma_half.T),
        sigma_inv_half=0.5 * (sigma_inv_half + sigma_inv_half.T),
        eigenvalues=eig.values,
    )


def compound_symmetry(p: int, rho: float) -> np.ndarray:
    """Covariance with unit diagonal and constant off-diagonal rho."""
    out = np.full((p, p), rho)
    np.fill_diagonal(out, 1.0)
    return out


def ar1_covariance(p: int, rho: float) -> np.ndarray:
    """Covariance with entries rho^|i-j|."""
    idx = np.arange(p)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def block_compound_symmetry(sizes: list[int], rhos: list[float]) -> np.ndarray:
    """Block-diagonal covariance of compound-symmetry blocks."""
    if len(sizes) != len(rhos):
        raise ValueError("sizes and rhos must align")
    p = int(sum(sizes))
    out = np.zeros((p, p))
    at = 0
    for size, rho in zip(sizes, rhos):
        out[at:at + size, at:at + size] = compound_symmetry(int(size), float(rho))
        at += int(size)
    return out


def check_sim_model_args(model_id: int, p: int, k: int) -> None:
    """Raise for invalid design arguments without building any matrices."""
    if model_id not in _SIM_BLOCK_SIZES:
        raise ValueError(f"unknown simulation design {model_id}")
    if k < 2:
        raise ValueError("need K >= 2 classes")
    s0 = _SIM_BLOCK_SIZES[model_id]
    if k * s0 > p:
        raise DimensionTooSmall(f"k * s0 = {k * s0} exceeds p = {p}")
    if model_id == 2 and p <= 100:
        raise DimensionTooSmall("p must exceed 100 for model 2")


def make_sim_model(model_id: int, p: int, k: int) -> PopulationModel:
    """One of the three standard simulation designs.

    Design 1: s0 = 5, compound symmetry rho = 0.5.
    Design 2: s0 = 3, a 100-wide compound-symmetry block with rho = 0.7
              followed by a (p - 100)-wide block with rho = 0.5; needs p > 100.
    Design 3: s0 = 10, AR(1) covariance with rho = 0.95.

    Class i's mean has ones on coordinates (i-1)*s0 .. i*s0 - 1.
    """
    check_sim_model_args(model_id, p, k)
    s0 = _SIM_BLOCK_SIZES[model_id]
    means = np.zeros((k, p))
    for i in range(k):
        means[i, i * s0:(i + 1) * s0] = 1.0
    if model_id == 1:
        sigma = compound_symmetry(p, 0.5)
    elif model_id == 2:
        sigma = block_compound_symmetry([100, p - 100], [0.7, 0.5])
    else:
        sigma = ar1_covariance(p, 0.95)
    return make_population(means, sigma)


def mahalanobis_matrix(model: PopulationModel) -> tuple[np.ndarray, float, float]:
    """Pairwise squared Mahalanobis distances and their off-diagonal extremes."""
    k = model.k
    out = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            d = model.means[j] - model.means[i]
            out[i, j] = out[j, i] = float(d @ model.sigma_inv @ d)
    off = out[~np.eye(k, dtype=bool)]
    return out, float(off.min()), float(off.max())


def check_conditions(
    model: PopulationModel, counts: np.ndarray | None = None
) -> ConditionReport:
    """Report eigenvalue bounds, separation extremes, and balance witnesses."""
    lam_max = float(model.eigenvalues[0])
    lam_min = float(model.eigenvalues[-1])
    _, m_min, m_max = mahalanobis_matrix(model)
    ratio = None
    if counts is not None:
        counts = np.asarray(counts)
        n = int(counts.sum())
        ratio = n / (model.k * int(counts.min()))
    return ConditionReport(
        lambda_min=lam_min,
        lambda_max=lam_max,
        c0_witness=max(lam_max, 1.0 / lam_min),
        m_min=m_min,
        m_max=m_max,
        min_class_count_ratio=ratio,
        k_le_p_plus_1=model.k <= model.p + 1,
    )


def _linear_scores(x: np.ndarray, centers: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """(x - c_i)' omega (x - c_i) for each row of x, up to an x-only constant."""
    w = centers @ omega  # (k, p)
    const = np.einsum("ij,ij->i", w, centers)  # c_i' omega c_i
    return x @ (-2.0 * w.T) + const


def optimal_classify(model: PopulationModel, x: np.ndarray) -> np.ndarray:
    """Bayes rule under uniform priors: nearest mean in the Sigma^-1 metric.

    Ties go to the lowest class index. Accepts a single vector or (n, p) rows;
    returns int labels in 1..k.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != model.p:
        raise ValueError(f"expected {model.p} features, got {x.shape[1]}")
    scores = _linear_scores(x, model.means, model.sigma_inv)
    labels = np.argmin(scores, axis=1).astype(np.int64) + 1
    return labels[0] if single else labels


def r_opt(
    model: PopulationModel, mc_samples: int, rng: RngStream
) -> tuple[float, float]:
    """Misclassification rate of the optimal rule, by stratified Monte Carlo.

    Draws mc_samples // k points per class. For K = 2 the closed form
    Phi(-Delta/2) is cross-checked against the estimate within four standard
    errors as a guard on both the sampler and the rule.
    """
    k, p = model.k, model.p
    per = mc_samples // k
    if per < 1:
        raise ValueError("mc_samples must be at least the number of classes")
    errors = 0
    for i in range(k):
        z = rng.normals(per * p).reshape(per, p)
        draws = model.means[i] + z @ model.chol.T
        errors += int(np.count_nonzero(optimal_classify(model, draws) != i + 1))
    total = per * k
    rate = errors / total
    se = float(np.sqrt(rate * (1.0 - rate) / total))
    if k == 2:
        _, m_min, _ = mahalanobis_matrix(model)
        closed = std_normal_cdf(-np.sqrt(m_min) / 2.0)
        guard = max(se, np.sqrt(closed * (1.0 - closed) / total))
        if abs(rate - closed) > 4.0 * guard:
            raise AssertionError(
                f"two-class MC estimate {rate} is over 4 SE from closed form {closed}"
            )
    return rate, se


def sample_dataset(
    model: PopulationModel, n_per_class, rng: RngStream
) -> LabeledSample:
    """Class-blocked draws: labels 1..k contiguous, given counts per class.

    n_per_class is a single positive int for a balanced design or a
    length-k sequence of positive per-class counts.
    """
    k, p = model.k, model.p
    if np.isscalar(n_per_class):
        counts = np.full(k, int(n_per_class))
    else:
        counts = np.asarray(n_per_class, dtype=np.int64)
        if counts.shape != (k,):
            raise ValueError(f"need one count per class, got shape {counts.shape}")
    if np.any(counts < 1):
        raise ValueError("every class count must be positive")
    x = np.empty((int(counts.sum()), p))
    labels = np.empty(x.shape[0], dtype=np.int64)
    at = 0
    for i in range(k):
        c = int(counts[i])
        z = rng.normals(c * p).reshape(c, p)
        x[at:at + c] = model.means[i] + z @ model.chol.T
        labels[at:at + c] = i + 1
        at += c
    return make_sample(x, labels, k)


def near_balanced_counts(n: int, k: int) -> np.ndarray:
    """Split n across k classes as evenly as possible, extras to low classes."""
    if n < k:
        raise ValueError(f"n = {n} cannot cover {k} classes")
    counts = np.full(k, n // k, dtype=np.int64)
    counts[: n % k] += 1
    return counts
