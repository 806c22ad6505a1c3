"""Exact excess-risk bounds for pairwise linear rules.

Every rule in this package discriminates class i from class j with a
linear score; in whitened coordinates the score is a_hat'z - d_hat,
while the optimal rule uses a'z - d. Conditional on the true class the
pair (a_hat'Z, a'Z) is bivariate normal, so the probability that the
fitted rule errs where the optimal rule does not is an explicit
bivariate-normal probability. Summing over ordered class pairs bounds
the excess misclassification risk from above; for two classes the
signed version is exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classifiers import ClassifierModel, GldaRule, LpdRule, OptRule, SldaRule
from .errors import DimensionMismatch
from .numerics import RngStream, bvn_lower_cdf, std_normal_cdf
from .population import PopulationModel, optimal_classify

_RHO_ONE_TOL = 1e-9


@dataclass(frozen=True)
class PairGeometry:
    """True and fitted discriminant geometry per ordered class pair.

    Arrays are (k, k, p) or (k, k) with zero diagonals; entry [j, i]
    describes the duel of class j against class i conditional on class i.
    a is the whitened true direction, d = ||a||^2 / 2 its offset; a_hat
    and d_hat are the fitted analogues; t is the regression coefficient
    of a on a_hat and perp_norm_sq the squared norm of the component of
    a orthogonal to a_hat.
    """

    a: np.ndarray
    a_hat: np.ndarray
    d: np.ndarray
    d_hat: np.ndarray
    t: np.ndarray
    perp_norm_sq: np.ndarray

    @property
    def k(self) -> int:
        return self.a.shape[0]

    @property
    def p(self) -> int:
        return self.a.shape[2]


@dataclass(frozen=True)
class BoundReport:
    per_pair_probability: np.ndarray  # (k, k), zero diagonal
    bound: float
    r_opt_est: float = float("nan")
    r_t_est: float = float("nan")
    gap_est: float = float("nan")
    gap_se: float = float("nan")
    gap_lower_bound: float = float("nan")


@dataclass(frozen=True)
class K2Check:
    value: float  # exact signed gap from the bivariate-normal identity
    mc_gap: float
    residual: float
    joint_se: float


@dataclass(frozen=True)
class TightnessExample:
    upper_ratio_bound: float
    mixing_bound: float
    strip_prob: float


@dataclass(frozen=True)
class GapLowerBound:
    value: float
    separation_ok: bool  # min perp_norm_sq / ||a||^2 exceeds c5 * s_n


def pair_geometry(truth: PopulationModel, model: ClassifierModel) -> PairGeometry:
    """Geometry of a fitted rule against the generating population.

    The fitted direction in observation space is v_ji (omega times a mean
    contrast, or an l1-program solution); whitening maps it to
    a_hat_ji = sigma^{1/2} v_ji and the offset to d_hat_ji =
    v_ji'(b_hat_ji - mu_i).
    """
    k, p = truth.k, truth.p
    if model.p != p:
        raise DimensionMismatch(f"model has p={model.p}, population has p={p}")
    if isinstance(model, OptRule) and model.k != k:
        raise DimensionMismatch(f"model has k={model.k}, population has k={k}")

    diffs = truth.means[:, None, :] - truth.means[None, :, :]  # [j, i] = mu_j - mu_i
    a = diffs @ truth.sigma_inv_half
    d = 0.5 * np.einsum("jip,jip->ji", a, a)

    if isinstance(model, OptRule):
        v = diffs @ truth.sigma_inv
        b_hat = 0.5 * (truth.means[:, None, :] + truth.means[None, :, :])
    elif isinstance(model, GldaRule):
        contrasts = model.class_means[:, None, :] - model.class_means[None, :, :]
        v = contrasts @ model.omega
        b_hat = 0.5 * (model.class_means[:, None, :] + model.class_means[None, :, :])
    elif isinstance(model, SldaRule):
        contrasts = model.centers[:, None, :] - model.centers[None, :, :]
        v = contrasts @ model.omega
        b_hat = 0.5 * (model.centers[:, None, :] + model.centers[None, :, :])
    elif isinstance(model, LpdRule):
        v = model.betas_to_1[:, None, :] - model.betas_to_1[None, :, :]
        b_hat = 0.5 * (model.class_means[:, None, :] + model.class_means[None, :, :])
    else:
        raise ValueError(
            f"pair geometry is undefined for method {model.method!r}"
        )

    a_hat = v @ truth.sigma_half
    d_hat = np.einsum("jip,jip->ji", v, b_hat - truth.means[None, :, :])

    a_hat_sq = np.einsum("jip,jip->ji", a_hat, a_hat)
    cross = np.einsum("jip,jip->ji", a, a_hat)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(a_hat_sq > 0.0, cross / a_hat_sq, 0.0)
    perp = np.maximum(2.0 * d - t * t * a_hat_sq, 0.0)

    off = ~np.eye(k, dtype=bool)
    zero_diag = lambda m: np.where(off, m, 0.0)  # noqa: E731
    return PairGeometry(
        a=a * off[:, :, None],
        a_hat=a_hat * off[:, :, None],
        d=zero_diag(d),
        d_hat=zero_diag(d_hat),
        t=zero_diag(t),
        perp_norm_sq=zero_diag(perp),
    )


def _pair_term(a_norm: float, a_hat_norm: float, rho: float,
               d: float, d_hat: float) -> float:
    """P(a_hat'Z > d_hat, a'Z < d) for Z standard normal."""
    if a_hat_norm == 0.0:
        # the zero direction errs everywhere or nowhere
        return std_normal_cdf(d / a_norm) if d_hat < 0.0 else 0.0
    h = d_hat / a_hat_norm
    q = d / a_norm
    if rho >= 1.0 - _RHO_ONE_TOL:
        return max(0.0, std_normal_cdf(q) - std_normal_cdf(h))
    if rho <= -1.0 + _RHO_ONE_TOL:
        return std_normal_cdf(min(-h, q))
    term = std_normal_cdf(q) - bvn_lower_cdf(h, q, rho)
    return min(1.0, max(0.0, term))


def _pair_tables(geom: PairGeometry):
    a_norm = np.sqrt(2.0 * geom.d)
    a_hat_norm = np.sqrt(np.einsum("jip,jip->ji", geom.a_hat, geom.a_hat))
    cross = np.einsum("jip,jip->ji", geom.a, geom.a_hat)
    denom = a_norm * a_hat_norm
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = np.where(denom > 0.0, cross / denom, 0.0)
    rho = np.clip(rho, -1.0, 1.0)
    return a_norm, a_hat_norm, rho


def excess_risk_bound(geom: PairGeometry) -> BoundReport:
    """Upper bound on the fitted rule's risk minus the optimal risk.

    Each ordered pair contributes the probability that the fitted duel
    rejects the true class while the optimal duel accepts it; the bound
    is the grand total divided by the number of classes.
    """
    k = geom.k
    a_norm, a_hat_norm, rho = _pair_tables(geom)
    table = np.zeros((k, k))
    for j in range(k):
        for i in range(k):
            if j == i:
                continue
            table[j, i] = _pair_term(
                float(a_norm[j, i]), float(a_hat_norm[j, i]),
                float(rho[j, i]), float(geom.d[j, i]), float(geom.d_hat[j, i]),
            )
    return BoundReport(per_pair_probability=table, bound=float(table.sum() / k))


def two_class_gap_check(geom: PairGeometry, mc_samples: int,
                        rng: RngStream) -> K2Check:
    """For two classes the signed pair sum equals the risk gap exactly.

    The exact value subtracts, from each bound term, the probability of
    the reverse event (fitted duel accepts where the optimal duel
    rejects). The Monte Carlo side replays both duels on shared draws of
    Z, so the residual has the paired standard error.
    """
    if geom.k != 2:
        raise ValueError("the exact gap identity needs exactly two classes")
    a_norm, a_hat_norm, rho = _pair_tables(geom)
    value = 0.0
    for j, i in ((0, 1), (1, 0)):
        an, ahn, r = float(a_norm[j, i]), float(a_hat_norm[j, i]), float(rho[j, i])
        d, d_hat = float(geom.d[j, i]), float(geom.d_hat[j, i])
        forward = _pair_term(an, ahn, r, d, d_hat)
        reverse = _pair_term(an, ahn, r, -d, -d_hat)
        value += forward - reverse
    value /= 2.0

    per = mc_samples // 2
    diff_mean = 0.0
    diff_var = 0.0
    p = geom.p
    for j, i in ((0, 1), (1, 0)):
        z = rng.normals(per * p).reshape(per, p)
        fitted_err = z @ geom.a_hat[j, i] > geom.d_hat[j, i]
        opt_err = z @ geom.a[j, i] > geom.d[j, i]
        diff = fitted_err.astype(np.float64) - opt_err.astype(np.float64)
        diff_mean += float(diff.mean()) / 2.0
        diff_var += float(diff.var(ddof=1)) / per / 4.0
    joint_se = float(np.sqrt(diff_var))
    return K2Check(
        value=value,
        mc_gap=diff_mean,
        residual=value - diff_mean,
        joint_se=joint_se,
    )


def tightness_example_bounds(d: float, eps: float) -> TightnessExample:
    """Quantities showing when the pairwise bound is asymptotically sharp.

    For two unit-variance classes at separation d, conditioning on a
    strip of width eps below the decision boundary: the bound-to-target
    ratio is at most 1/Phi(d/2), cross-class mixing is at most
    exp(-d*eps/2), and the strip itself has probability
    Phi(d) - Phi(d - eps). The first two approach (1, 0) as d and d*eps
    grow, which is the regime where the bound is tight.
    """
    if d <= 0.0 or eps <= 0.0:
        raise ValueError("d and eps must be positive")
    # Phi(d) - Phi(d - eps) evaluated in the lower tail, where the
    # difference survives floating-point cancellation for large d
    return TightnessExample(
        upper_ratio_bound=1.0 / std_normal_cdf(d / 2.0),
        mixing_bound=float(np.exp(-d * eps / 2.0)),
        strip_prob=std_normal_cdf(eps - d) - std_normal_cdf(-d),
    )


def excess_risk_lower_bound(
    geom: PairGeometry, c4: float, c5: float, s_n: float, r_opt_value: float
) -> GapLowerBound:
    """Lower bound on the excess risk under a direction-separation condition.

    Evaluates (c5 / (4 sqrt(c4))) * sqrt(m_max * s_n) * r_opt for
    caller-supplied constants, and reports whether every pair keeps at
    least c5 * s_n of its true direction's squared norm orthogonal to
    the fitted direction (the condition under which the bound applies).
    """
    if c4 < 1.0 or c5 <= 0.0 or s_n <= 0.0:
        raise ValueError("need c4 >= 1, c5 > 0, s_n > 0")
    k = geom.k
    off = ~np.eye(k, dtype=bool)
    m_sq = 2.0 * geom.d  # ||a||^2 is the squared Mahalanobis separation
    m_max = float(m_sq[off].max())
    ratio = geom.perp_norm_sq[off] / m_sq[off]
    value = (c5 / (4.0 * np.sqrt(c4))) * np.sqrt(m_max * s_n) * r_opt_value
    return GapLowerBound(
        value=float(value),
        separation_ok=bool(ratio.min() > c5 * s_n),
    )


def mc_gap(
    truth: PopulationModel,
    model: ClassifierModel,
    mc_samples: int,
    rng: RngStream,
) -> tuple[float, float, float, float]:
    """(r_t, r_opt, gap, gap_se) with both rules replayed on shared draws."""
    k, p = truth.k, truth.p
    per = mc_samples // k
    if per < 1:
        raise ValueError("mc_samples must be at least the number of classes")
    r_t = 0.0
    r_o = 0.0
    var_sum = 0.0
    for i in range(k):
        z = rng.normals(per * p).reshape(per, p)
        draws = truth.means[i] + z @ truth.chol.T
        fitted_err = (model.predict(draws) != i + 1).astype(np.float64)
        opt_err = (optimal_classify(truth, draws) != i + 1).astype(np.float64)
        r_t += float(fitted_err.mean()) / k
        r_o += float(opt_err.mean()) / k
        diff = fitted_err - opt_err
        var_sum += float(diff.var(ddof=1)) / per / (k * k)
    return r_t, r_o, r_t - r_o, float(np.sqrt(var_sum))


def bound_report(
    truth: PopulationModel,
    model: ClassifierModel,
    mc_samples: int,
    rng: RngStream,
    c4: float | None = None,
    c5: float | None = None,
    s_n: float | None = None,
) -> BoundReport:
    """Full report: exact bound, Monte Carlo gap, optional lower bound."""
    geom = pair_geometry(truth, model)
    base = excess_risk_bound(geom)
    r_t, r_o, gap, se = mc_gap(truth, model, mc_samples, rng)
    lower = float("nan")
    if c4 is not None and c5 is not None and s_n is not None:
        lower = excess_risk_lower_bound(geom, c4, c5, s_n, r_o).value
    return BoundReport(
        per_pair_probability=base.per_pair_probability,
        bound=base.bound,
        r_opt_est=r_o,
        r_t_est=r_t,
        gap_est=gap,
        gap_se=se,
        gap_lower_bound=lower,
    )
