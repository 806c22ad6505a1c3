"""Pooled sample statistics, thresholding estimators, and rate diagnostics.

All fitted quantities are referenced to class 1: mean contrasts are
delta_hat[j] = xbar_j - xbar_1, and the l1-direction rows solve one
linear program per class against that same reference.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import lp
from .errors import DegenerateDesign
from .population import LabeledSample, PopulationModel, mahalanobis_matrix


@dataclass(frozen=True)
class FittedStats:
    """Class means and the pooled covariance with divisor n."""

    class_means: np.ndarray  # (k, p)
    counts: np.ndarray  # (k,)
    n: int
    k: int
    p: int
    sigma_hat: np.ndarray  # (p, p), divisor n
    shrink_factor: float  # 1 - k/n


@dataclass(frozen=True)
class ThresholdedCov:
    """Bias-corrected covariance with small entries zeroed."""

    sigma_tilde: np.ndarray
    threshold: float  # t_n = m1 * sqrt(log(p) / n)
    m1: float


@dataclass(frozen=True)
class ThresholdedDeltas:
    """Mean contrasts against class 1 with small entries zeroed."""

    deltas_to_1: np.ndarray  # (k, p); row 0 is exactly zero
    threshold: float  # a_n = m2 * (log(p) / n)^alpha
    m2: float
    alpha: float


@dataclass(frozen=True)
class LpdDirections:
    """Per-class l1-minimal directions against class 1."""

    betas_to_1: np.ndarray  # (k, p); row 0 is exactly zero
    feasible: np.ndarray  # (k,) bool; row 0 trivially True
    lam: float


@dataclass(frozen=True)
class RateReport:
    """Population sparsity measures and the convergence-rate quantities."""

    c_hp: float
    d_gp: float
    q_n: int
    h: float
    g: float
    alpha: float
    r: float
    s_n: float
    d_n_rate: float
    b_n: float
    r_n: float
    l1_beta_max: float


def fit_stats(sample: LabeledSample) -> FittedStats:
    """Class means and pooled covariance (divisor n) from a labeled sample."""
    n, k, p = sample.n, sample.k, sample.p
    if n <= k:
        raise DegenerateDesign(f"n = {n} must exceed K = {k}")
    means = np.empty((k, p))
    centered = np.empty_like(sample.x)
    for i in range(k):
        rows = sample.labels == i + 1
        means[i] = sample.x[rows].mean(axis=0)
        centered[rows] = sample.x[rows] - means[i]
    sigma_hat = (centered.T @ centered) / n
    return FittedStats(
        class_means=means,
        counts=sample.counts.copy(),
        n=n,
        k=k,
        p=p,
        sigma_hat=0.5 * (sigma_hat + sigma_hat.T),
        shrink_factor=1.0 - k / n,
    )


def corrected_cov(stats: FittedStats) -> np.ndarray:
    """Bias-corrected pooled covariance (1 - K/n)^-1 sigma_hat."""
    return stats.sigma_hat / stats.shrink_factor


def threshold_cov(stats: FittedStats, m1: float) -> ThresholdedCov:
    """Hard-threshold the corrected covariance at t_n = m1 sqrt(log(p)/n).

    Entries with magnitude at least t_n survive; m1 = 0 keeps everything.
    """
    if m1 < 0:
        raise ValueError("m1 must be non-negative")
    t_n = m1 * np.sqrt(np.log(stats.p) / stats.n)
    corrected = corrected_cov(stats)
    sigma_tilde = np.where(np.abs(corrected) >= t_n, corrected, 0.0)
    return ThresholdedCov(sigma_tilde=sigma_tilde, threshold=float(t_n), m1=float(m1))


def threshold_deltas(stats: FittedStats, m2: float, alpha: float) -> ThresholdedDeltas:
    """Hard-threshold the class-1 mean contrasts at a_n = m2 (log(p)/n)^alpha."""
    if m2 < 0:
        raise ValueError("m2 must be non-negative")
    a_n = m2 * (np.log(stats.p) / stats.n) ** alpha
    deltas = stats.class_means - stats.class_means[0]
    deltas = np.where(np.abs(deltas) >= a_n, deltas, 0.0)
    deltas[0] = 0.0
    return ThresholdedDeltas(
        deltas_to_1=deltas, threshold=float(a_n), m2=float(m2), alpha=float(alpha)
    )


def lpd_directions(stats: FittedStats, lam: float) -> LpdDirections:
    """Row j solves min ||beta||_1 subject to ||corrected_cov beta - delta_j||_inf <= lam.

    Infeasibility (or hitting the iteration limit) is recorded per row rather
    than raised; callers decide whether a partial fit is usable.
    """
    if lam < 0:
        raise ValueError("lam must be non-negative")
    sigma_bar = corrected_cov(stats)
    betas = np.zeros((stats.k, stats.p))
    feasible = np.ones(stats.k, dtype=bool)
    for j in range(1, stats.k):
        delta = stats.class_means[j] - stats.class_means[0]
        status, beta = lp.solve_l1_linf(sigma_bar, delta, lam)
        if status == "optimal":
            betas[j] = beta
        else:
            feasible[j] = False
    return LpdDirections(betas_to_1=betas, feasible=feasible, lam=float(lam))


def sparsity_and_rates(
    model: PopulationModel,
    n: int,
    h: float = 0.5,
    g: float = 0.5,
    alpha: float = 0.3,
    r: float = 2.0,
    m2: float = 1.0,
) -> RateReport:
    """Population sparsity measures and the derived convergence-rate quantities.

    The covariance row measure is c_hp = max_k sum_l |sigma_kl|^h with the
    0^h := 0 convention, the contrast measure is d_gp = max over ordered
    class pairs of sum_k |delta_k|^(2g), and q_n counts contrast entries
    against class 1 exceeding a_n / r for a_n = m2 (log(p)/n)^alpha.
    """
    if not 0 <= h < 1:
        raise ValueError("h must lie in [0, 1)")
    if not 0 < g <= 1:
        raise ValueError("g must lie in (0, 1]")
    p, k = model.p, model.k
    log_ratio = np.log(p) / n

    abs_sigma = np.abs(model.sigma)
    with np.errstate(divide="ignore"):
        pow_sigma = np.where(abs_sigma > 0.0, abs_sigma ** h, 0.0)
    c_hp = float(pow_sigma.sum(axis=1).max())

    d_gp = 0.0
    l1_beta_max = 0.0
    for i in range(k):
        for j in range(k):
            if i == j:
                continue
            delta = model.means[j] - model.means[i]
            ad = np.abs(delta)
            d_gp = max(d_gp, float(np.where(ad > 0.0, ad ** (2.0 * g), 0.0).sum()))
            l1_beta_max = max(l1_beta_max, float(np.abs(model.sigma_inv @ delta).sum()))

    a_n = m2 * log_ratio ** alpha
    q_n = 0
    for j in range(1, k):
        delta = model.means[j] - model.means[0]
        q_n = max(q_n, int(np.count_nonzero(np.abs(delta) > a_n / r)))

    _, m_min, m_max = mahalanobis_matrix(model)
    s_n = p * np.sqrt(log_ratio) + (k / np.sqrt(m_min)) * np.sqrt(p / n)
    d_n_rate = c_hp * log_ratio ** ((1.0 - h) / 2.0)
    b_n = max(
        d_n_rate,
        np.sqrt(a_n ** (2.0 * (1.0 - g)) * d_gp) / np.sqrt(m_min),
        np.sqrt((c_hp + k) * q_n / n) / np.sqrt(m_min),
    )
    r_n = (np.sqrt(k * m_max) * l1_beta_max + l1_beta_max ** 2) * np.sqrt(log_ratio)

    return RateReport(
        c_hp=c_hp,
        d_gp=d_gp,
        q_n=q_n,
        h=float(h),
        g=float(g),
        alpha=float(alpha),
        r=float(r),
        s_n=float(s_n),
        d_n_rate=float(d_n_rate),
        b_n=float(b_n),
        r_n=float(r_n),
        l1_beta_max=l1_beta_max,
    )
