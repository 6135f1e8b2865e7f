"""Maximum-likelihood estimation and the cellular-aging test.

Estimation splits the observed mothers up to generation n into the cells
with two alive daughters, with only the new pole, and with only the old
pole. Each block gives ordinary least squares for its regression pair, fate
probabilities are count ratios, and noise parameters come from residual
moments. All formulas reduce to per-block sufficient statistics gathered in
one vectorised pass over the tree.

The aging statistic compares the new-pole and old-pole regressions on the
both-alive block; under the no-aging hypothesis it is asymptotically a
chi-square with two degrees of freedom on the survival event, giving the
p-value exp(-zeta/2). A death-blind "pooled" variant of the statistic is
also provided; ignoring death inflates its level by a computable factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from math import comb
from typing import Optional

import numpy as np

from .model import KAPPA_LABELS, THETA_LABELS, ModelKappa, ModelTheta, mixture_components, require_supercritical
from .polynomials import PolySpec
from .tree import LineageTree, SubtreeCounts, subtree_counts

FORMULA_VERSION = "gwbar-mle-1"

RHO_CLAMP = 1e-9


# -- sufficient statistics ---------------------------------------------------


@dataclass
class BlockSums:
    """Per-block moments of (mother x, daughters d0/d1 where observed)."""

    n: int = 0
    sx: float = 0.0
    sxx: float = 0.0
    s0: float = 0.0
    s00: float = 0.0
    sx0: float = 0.0
    s1: float = 0.0
    s11: float = 0.0
    sx1: float = 0.0
    s01: float = 0.0

    def accumulate(self, x, d0=None, d1=None):
        self.n += len(x)
        self.sx += float(x.sum())
        self.sxx += float((x * x).sum())
        if d0 is not None:
            self.s0 += float(d0.sum())
            self.s00 += float((d0 * d0).sum())
            self.sx0 += float((x * d0).sum())
        if d1 is not None:
            self.s1 += float(d1.sum())
            self.s11 += float((d1 * d1).sum())
            self.sx1 += float((x * d1).sum())
        if d0 is not None and d1 is not None:
            self.s01 += float((d0 * d1).sum())


@dataclass
class TreeBlocks:
    """Sufficient statistics of the three regression blocks up to n."""

    n: int
    both: BlockSums
    new_only: BlockSums
    old_only: BlockSums
    none_count: int
    t_star: int

    @property
    def counts(self) -> SubtreeCounts:
        return SubtreeCounts(
            self.n, self.t_star, self.both.n, self.new_only.n, self.old_only.n, self.none_count
        )


def gather_blocks(tree: LineageTree, n: int) -> TreeBlocks:
    """One pass over mothers of generation <= n, split by daughter fate."""
    if len(tree) == 0:
        raise ValueError("cannot gather statistics from an empty tree")
    if n < 0:
        raise ValueError("n must be >= 0")
    both, new_only, old_only = BlockSums(), BlockSums(), BlockSums()
    none_count = 0
    t_star = 0
    for q in range(min(n, tree.max_generation) + 1):
        x, y, z, has_y, has_z = tree.mother_daughter_arrays(q)
        t_star += len(x)
        mb = has_y & has_z
        mn = has_y & ~has_z
        mo = ~has_y & has_z
        both.accumulate(x[mb], y[mb], z[mb])
        new_only.accumulate(x[mn], d0=y[mn])
        old_only.accumulate(x[mo], d1=z[mo])
        none_count += int(np.sum(~has_y & ~has_z))
    return TreeBlocks(n, both, new_only, old_only, none_count, t_star)


def _ols(n, sx, sxx, sd, sxd):
    """Least-squares (slope, intercept) or None when the block is degenerate
    (fewer than two cells, or zero mother variance)."""
    if n < 2:
        return None
    var = sxx / n - (sx / n) ** 2
    if var <= 0.0:
        return None
    slope = (sxd / n - (sx / n) * (sd / n)) / var
    intercept = sd / n - slope * (sx / n)
    return slope, intercept


def _residual_sq_sum(b: BlockSums, pole: int, slope: float, intercept: float) -> float:
    if pole == 0:
        sd, sdd, sxd = b.s0, b.s00, b.sx0
    else:
        sd, sdd, sxd = b.s1, b.s11, b.sx1
    terms = (
        sdd,
        -2.0 * slope * sxd,
        -2.0 * intercept * sd,
        slope**2 * b.sxx,
        2.0 * slope * intercept * b.sx,
        b.n * intercept**2,
    )
    total = sum(terms)
    # cancellation floor: an exact fit must yield exactly zero
    if total <= 1e-12 * sum(abs(t) for t in terms):
        return 0.0
    return total


def _residual_cross_sum(b: BlockSums, a0, b0, a1, b1) -> float:
    return (
        b.s01
        - a1 * b.sx0
        - b1 * b.s0
        - a0 * b.sx1
        + a0 * a1 * b.sxx
        + a0 * b1 * b.sx
        - b0 * b.s1
        + b0 * a1 * b.sx
        + b0 * b1 * b.n
    )


# -- estimators ---------------------------------------------------------------


@dataclass(frozen=True)
class ThetaHat:
    """Point estimates; regression entries are None when their block is
    degenerate (the matching validity flag is False)."""

    alpha0: Optional[float]
    beta0: Optional[float]
    alpha1: Optional[float]
    beta1: Optional[float]
    alpha0p: Optional[float]
    beta0p: Optional[float]
    alpha1p: Optional[float]
    beta1p: Optional[float]
    p10: float
    p0: float
    p1: float
    both_alive_valid: bool
    new_only_valid: bool
    old_only_valid: bool

    def as_vector(self) -> list[Optional[float]]:
        return [getattr(self, name) for name in THETA_LABELS]


@dataclass(frozen=True)
class KappaHat:
    """Noise estimates with validity flags; rho is reported raw and clamped
    to the open interval for downstream use."""

    sigma: Optional[float]
    rho_raw: Optional[float]
    rho: Optional[float]
    sigma0: Optional[float]
    sigma1: Optional[float]
    sigma_valid: bool
    rho_valid: bool
    sigma0_valid: bool
    sigma1_valid: bool


def estimate_theta(tree: LineageTree, n: int, blocks: TreeBlocks | None = None) -> ThetaHat:
    """Block least squares plus fate-count ratios over mothers up to n."""
    if n < 1:
        raise ValueError("n must be >= 1")
    blocks = blocks or gather_blocks(tree, n)
    b = blocks.both
    fit0 = _ols(b.n, b.sx, b.sxx, b.s0, b.sx0)
    fit1 = _ols(b.n, b.sx, b.sxx, b.s1, b.sx1)
    both_valid = fit0 is not None and fit1 is not None
    nb = blocks.new_only
    fit0p = _ols(nb.n, nb.sx, nb.sxx, nb.s0, nb.sx0)
    ob = blocks.old_only
    fit1p = _ols(ob.n, ob.sx, ob.sxx, ob.s1, ob.sx1)
    t = blocks.t_star
    return ThetaHat(
        alpha0=fit0[0] if both_valid else None,
        beta0=fit0[1] if both_valid else None,
        alpha1=fit1[0] if both_valid else None,
        beta1=fit1[1] if both_valid else None,
        alpha0p=fit0p[0] if fit0p else None,
        beta0p=fit0p[1] if fit0p else None,
        alpha1p=fit1p[0] if fit1p else None,
        beta1p=fit1p[1] if fit1p else None,
        p10=b.n / t,
        p0=nb.n / t,
        p1=ob.n / t,
        both_alive_valid=both_valid,
        new_only_valid=fit0p is not None,
        old_only_valid=fit1p is not None,
    )


def estimate_kappa(
    tree: LineageTree, n: int, theta_hat: ThetaHat, blocks: TreeBlocks | None = None
) -> KappaHat:
    """Residual-moment estimates of the noise parameters.

    sigma^2 averages the squared both-alive residuals over both poles with
    denominator 2|both-alive block|; no degrees-of-freedom correction is
    applied. rho divides the mean residual cross product by sigma^2 and is
    undefined when sigma = 0.
    """
    blocks = blocks or gather_blocks(tree, n)
    b = blocks.both
    sigma = rho_raw = rho = None
    sigma_valid = rho_valid = False
    if theta_hat.both_alive_valid:
        ss0 = _residual_sq_sum(b, 0, theta_hat.alpha0, theta_hat.beta0)
        ss1 = _residual_sq_sum(b, 1, theta_hat.alpha1, theta_hat.beta1)
        sigma2 = (ss0 + ss1) / (2.0 * b.n)
        sigma = math.sqrt(sigma2)
        sigma_valid = True
        if sigma2 > 0.0:
            cross = _residual_cross_sum(
                b, theta_hat.alpha0, theta_hat.beta0, theta_hat.alpha1, theta_hat.beta1
            )
            rho_raw = cross / (sigma2 * b.n)
            rho = min(max(rho_raw, -1.0 + RHO_CLAMP), 1.0 - RHO_CLAMP)
            # A single residual pair pins rho at +-1; flag rather than trust.
            rho_valid = b.n >= 2
    sigma0 = sigma1 = None
    if theta_hat.new_only_valid:
        nb = blocks.new_only
        sigma0 = math.sqrt(_residual_sq_sum(nb, 0, theta_hat.alpha0p, theta_hat.beta0p) / nb.n)
    if theta_hat.old_only_valid:
        ob = blocks.old_only
        sigma1 = math.sqrt(_residual_sq_sum(ob, 1, theta_hat.alpha1p, theta_hat.beta1p) / ob.n)
    return KappaHat(
        sigma=sigma,
        rho_raw=rho_raw,
        rho=rho,
        sigma0=sigma0,
        sigma1=sigma1,
        sigma_valid=sigma_valid,
        rho_valid=rho_valid,
        sigma0_valid=sigma0 is not None,
        sigma1_valid=sigma1 is not None,
    )


# -- stationary moments -------------------------------------------------------

_EVEN_NORMAL = {0: 1.0, 2: 1.0, 4: 3.0}


def _mixture_ab_moment(components, j: int, l: int) -> float:
    """E[a^j b^l] under the coefficient mixture, b = beta + sigma * e."""
    out = 0.0
    for w, alpha, beta, sigma in components:
        if w == 0.0:
            continue
        inner = 0.0
        for r in range(0, l + 1, 2):
            inner += comb(l, r) * beta ** (l - r) * sigma**r * _EVEN_NORMAL[r]
        out += w * alpha**j * inner
    return out


def _stationary_moments_from_components(components, up_to: int) -> list[float]:
    mus = [1.0]
    for k in range(1, up_to + 1):
        ak = _mixture_ab_moment(components, k, 0)
        if ak >= 1.0:
            raise ValueError(f"E[a^{k}] = {ak} >= 1: stationary moment undefined")
        total = 0.0
        for j in range(k):
            total += comb(k, j) * _mixture_ab_moment(components, j, k - j) * mus[j]
        mus.append(total / (1.0 - ak))
    return mus


def stationary_moment(k: int, theta: ModelTheta, kappa: ModelKappa) -> float:
    """k-th moment (k in 1..4) of the stationary law of the lineage chain.

    Solves mu_k (1 - E[a^k]) = sum_{j<k} C(k,j) E[a^j b^(k-j)] mu_j with
    (a, b) from the four-branch coefficient mixture; for k = 1, 2 this is
    mu_1 = E[b]/(1 - E[a]) and
    mu_2 = (2 E[ab] mu_1 + E[b^2]) / (1 - E[a^2]).
    """
    if not 1 <= k <= 4:
        raise ValueError("k must be in 1..4")
    comps = mixture_components(theta, kappa)
    return _stationary_moments_from_components(comps, k)[k]


def stationary_mean_poly(theta: ModelTheta, kappa: ModelKappa, coefs: np.ndarray) -> float:
    """Integral of a polynomial in x against the stationary law."""
    deg = len(coefs) - 1
    if deg > 4:
        raise ValueError("stationary moments tabulated up to order 4 only")
    comps = mixture_components(theta, kappa)
    mus = _stationary_moments_from_components(comps, deg)
    return float(sum(c * mus[k] for k, c in enumerate(coefs)))


def stationary_mean(theta: ModelTheta, kappa: ModelKappa, f: PolySpec) -> float:
    """<mu, f> for a PolySpec in x only (e.g. a kernel image)."""
    return stationary_mean_poly(theta, kappa, f.poly_in_x())


# -- asymptotic covariances ---------------------------------------------------


@dataclass(frozen=True)
class CovarianceReport:
    """Asymptotic covariance matrices for the standardised estimators.

    ``sigma_theta`` is the 11x11 covariance of sqrt(|tree up to n|) times
    the estimation error, in the canonical label order; regression blocks
    whose fate probability is zero are NaN and flagged absent.
    ``k_matrix`` is the 2x2 design factor, ``gamma`` the fate-probability
    block, and ``sigma_prime`` the 4x4 both-alive covariance under the
    sqrt(both-alive count) normalisation.
    """

    mu1: float
    mu2: float
    k_matrix: np.ndarray
    gamma: np.ndarray
    sigma_prime: np.ndarray
    sigma_theta: np.ndarray
    absent_blocks: tuple[str, ...]
    labels: tuple[str, ...] = THETA_LABELS

    def to_dict(self) -> dict:
        return {
            "formula_version": FORMULA_VERSION,
            "mu1": self.mu1,
            "mu2": self.mu2,
            "labels": list(self.labels),
            "k_matrix": self.k_matrix.tolist(),
            "gamma": self.gamma.tolist(),
            "sigma_prime": self.sigma_prime.tolist(),
            "sigma_theta": [
                [None if math.isnan(v) else v for v in row] for row in self.sigma_theta.tolist()
            ],
            "absent_blocks": list(self.absent_blocks),
        }


def covariance_matrices(theta: ModelTheta, kappa: ModelKappa) -> CovarianceReport:
    require_supercritical(theta)
    mu1 = stationary_moment(1, theta, kappa)
    mu2 = stationary_moment(2, theta, kappa)
    spread = mu2 - mu1**2
    if spread <= 0.0:
        raise ValueError("degenerate stationary law: mu2 <= mu1^2")
    K = np.array([[1.0, -mu1], [-mu1, mu2]]) / spread
    p10, p0, p1 = theta.p10, theta.p0, theta.p1
    gamma = np.array(
        [
            [p10 * (1 - p10), -p0 * p10, -p1 * p10],
            [-p0 * p10, p0 * (1 - p0), -p0 * p1],
            [-p1 * p10, -p0 * p1, p1 * (1 - p1)],
        ]
    )
    s2 = kappa.sigma**2
    sigma_prime = np.block([[s2 * K, kappa.rho * s2 * K], [kappa.rho * s2 * K, s2 * K]])
    sigma = np.zeros((11, 11))
    sigma[0:2, 0:2] = s2 * K / p10
    sigma[2:4, 2:4] = s2 * K / p10
    sigma[0:2, 2:4] = kappa.rho * s2 * K / p10
    sigma[2:4, 0:2] = kappa.rho * s2 * K / p10
    absent = []
    if p0 > 0.0:
        sigma[4:6, 4:6] = kappa.sigma0**2 * K / p0
    else:
        sigma[4:6, :] = np.nan
        sigma[:, 4:6] = np.nan
        absent.append("new_only")
    if p1 > 0.0:
        sigma[6:8, 6:8] = kappa.sigma1**2 * K / p1
    else:
        sigma[6:8, :] = np.nan
        sigma[:, 6:8] = np.nan
        absent.append("old_only")
    sigma[8:11, 8:11] = gamma
    return CovarianceReport(
        mu1=mu1,
        mu2=mu2,
        k_matrix=K,
        gamma=gamma,
        sigma_prime=sigma_prime,
        sigma_theta=sigma,
        absent_blocks=tuple(absent),
    )


# -- log-likelihood -----------------------------------------------------------

_LOG_2PI = math.log(2.0 * math.pi)


def log_likelihood(
    tree: LineageTree,
    n: int,
    theta: ModelTheta,
    kappa: ModelKappa,
    blocks: TreeBlocks | None = None,
) -> float:
    """Exact log-likelihood of the observed mothers up to generation n.

    Sums, per both-alive mother, the fate log-probability and the bivariate
    normal density of the residual pair; per single-survivor mother the fate
    log-probability and the univariate density; per childless mother the
    log-probability that both daughters die. A fate of zero probability
    observed in the data yields -inf.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    blocks = blocks or gather_blocks(tree, n)
    total = 0.0
    b = blocks.both
    if b.n:
        if theta.p10 == 0.0:
            return float("-inf")
        ss0 = _residual_sq_sum(b, 0, theta.alpha0, theta.beta0)
        ss1 = _residual_sq_sum(b, 1, theta.alpha1, theta.beta1)
        cross = _residual_cross_sum(b, theta.alpha0, theta.beta0, theta.alpha1, theta.beta1)
        s2 = kappa.sigma**2
        r = kappa.rho
        quad = (ss0 - 2.0 * r * cross + ss1) / (s2 * (1.0 - r**2))
        total += b.n * (
            math.log(theta.p10) - _LOG_2PI - math.log(s2) - 0.5 * math.log(1.0 - r**2)
        )
        total -= 0.5 * quad
    for sums, p, ap, bp, sig, pole in (
        (blocks.new_only, theta.p0, theta.alpha0p, theta.beta0p, kappa.sigma0, 0),
        (blocks.old_only, theta.p1, theta.alpha1p, theta.beta1p, kappa.sigma1, 1),
    ):
        if sums.n:
            if p == 0.0:
                return float("-inf")
            ss = _residual_sq_sum(sums, pole, ap, bp)
            total += sums.n * (math.log(p) - 0.5 * (_LOG_2PI + math.log(sig**2)))
            total -= ss / (2.0 * sig**2)
    if blocks.none_count:
        if theta.p_none == 0.0:
            return float("-inf")
        total += blocks.none_count * math.log(theta.p_none)
    return total


# -- the aging test -----------------------------------------------------------


@dataclass(frozen=True)
class AgingTestReport:
    """Outcome of the aging test at a given level.

    ``reject`` is None when no decision can be made (extinct by generation
    n, or a required estimate is unavailable). On the survival event the
    statistic is asymptotically chi-square with two degrees of freedom, so
    p = exp(-zeta/2).
    """

    n: int
    level: float
    survived: bool
    zeta: Optional[float]
    p_value: Optional[float]
    reject: Optional[bool]
    counts: SubtreeCounts
    warnings: tuple[str, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "formula_version": FORMULA_VERSION,
            "n": self.n,
            "level": self.level,
            "survived": self.survived,
            "zeta": self.zeta,
            "p_value": self.p_value,
            "reject": self.reject,
            "decision": (
                "no_decision"
                if self.reject is None
                else ("reject" if self.reject else "no_rejection")
            ),
            "counts": {
                "t_star": self.counts.t_star,
                "t_both": self.counts.t_both,
                "t_new_only": self.counts.t_new_only,
                "t_old_only": self.counts.t_old_only,
                "t_none": self.counts.t_none,
            },
            "warnings": list(self.warnings),
        }


def _moments_from_estimates(theta_hat: ThetaHat, kappa_hat: KappaHat):
    """(mu1_hat, mu2_hat) from plug-in estimates, or None with a reason."""
    m_hat = 2.0 * theta_hat.p10 + theta_hat.p0 + theta_hat.p1
    if m_hat <= 1.0:
        return None, "estimated mean offspring <= 1"
    comps = []
    for w, alpha, beta, sigma, ok in (
        (theta_hat.p10 / m_hat, theta_hat.alpha0, theta_hat.beta0, kappa_hat.sigma, theta_hat.both_alive_valid),
        (theta_hat.p10 / m_hat, theta_hat.alpha1, theta_hat.beta1, kappa_hat.sigma, theta_hat.both_alive_valid),
        (theta_hat.p0 / m_hat, theta_hat.alpha0p, theta_hat.beta0p, kappa_hat.sigma0, theta_hat.new_only_valid),
        (theta_hat.p1 / m_hat, theta_hat.alpha1p, theta_hat.beta1p, kappa_hat.sigma1, theta_hat.old_only_valid),
    ):
        if w == 0.0:
            continue
        if not ok or alpha is None or sigma is None:
            return None, "a block with positive estimated weight is degenerate"
        comps.append((w, alpha, beta, sigma))
    try:
        mus = _stationary_moments_from_components(comps, 2)
    except ValueError as exc:
        return None, str(exc)
    return (mus[1], mus[2]), None


def zeta_statistic(count_both, sigma, rho, d_alpha, d_beta, mu1, mu2):
    """Quadratic-form statistic; when the plug-in spread mu2 - mu1^2 is
    negative (possible in finite samples) only the location term is kept so
    the statistic stays nonnegative."""
    spread = mu2 - mu1**2
    warn = None
    if spread < 0.0:
        spread = 0.0
        warn = "negative plug-in spread; slope term dropped"
    quad = d_alpha**2 * spread + (d_alpha * mu1 + d_beta) ** 2
    zeta = count_both / (2.0 * sigma**2 * (1.0 - rho)) * quad
    return zeta, warn


def aging_test(tree: LineageTree, n: int, level: float) -> AgingTestReport:
    """Test equality of the new-pole and old-pole regressions up to n.

    Requires a valid both-alive block with positive noise estimate; rejects
    when exp(-zeta/2) < level and the tree is alive at generation n.
    """
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    blocks = gather_blocks(tree, n)
    counts = blocks.counts
    survived = tree.generation_size(n) > 0
    theta_hat = estimate_theta(tree, n, blocks)
    kappa_hat = estimate_kappa(tree, n, theta_hat, blocks)
    warnings = []

    def no_decision(reason: str) -> AgingTestReport:
        warnings.append(reason)
        return AgingTestReport(
            n=n,
            level=level,
            survived=survived,
            zeta=None,
            p_value=None,
            reject=None,
            counts=counts,
            warnings=tuple(warnings),
        )

    if not theta_hat.both_alive_valid:
        return no_decision("both-alive block is degenerate")
    if not kappa_hat.rho_valid or kappa_hat.sigma == 0.0:
        return no_decision("noise estimate is zero or undefined")
    moments, reason = _moments_from_estimates(theta_hat, kappa_hat)
    if moments is None:
        return no_decision(reason)
    mu1, mu2 = moments
    zeta, warn = zeta_statistic(
        blocks.both.n,
        kappa_hat.sigma,
        kappa_hat.rho,
        theta_hat.alpha0 - theta_hat.alpha1,
        theta_hat.beta0 - theta_hat.beta1,
        mu1,
        mu2,
    )
    if warn:
        warnings.append(warn)
    p_value = math.exp(-zeta / 2.0)
    reject = bool(p_value < level) if survived else None
    if not survived:
        warnings.append("extinct by generation n: no decision")
    return AgingTestReport(
        n=n,
        level=level,
        survived=survived,
        zeta=zeta,
        p_value=p_value,
        reject=reject,
        counts=counts,
        warnings=tuple(warnings),
    )


# -- death-blind pooled statistic ---------------------------------------------


def misspecified_constant(theta: ModelTheta, kappa: ModelKappa) -> float:
    """Level-inflation factor of the death-blind pooled statistic.

    Valid when death is symmetric (p0 = p1), present (1 < m < 2) and the
    single-survivor regressions coincide with the both-alive ones; then the
    pooled statistic converges to this constant times the chi-square limit,
    and the constant exceeds 1.
    """
    m = require_supercritical(theta)
    if m >= 2.0:
        raise ValueError("pooled analysis needs death to occur (m < 2)")
    if theta.p0 != theta.p1:
        raise ValueError("pooled analysis assumes symmetric death: p0 = p1")
    for a, b in (
        (theta.alpha0p, theta.alpha0),
        (theta.beta0p, theta.beta0),
        (theta.alpha1p, theta.alpha1),
        (theta.beta1p, theta.beta1),
    ):
        if a != b:
            raise ValueError("pooled analysis assumes primed coefficients equal unprimed")
    q = theta.p10 + theta.p1
    return (1.0 - kappa.rho * theta.p10 / q) / (q * (1.0 - kappa.rho))


@dataclass(frozen=True)
class PooledTestResult:
    """Death-blind statistic computed by pooling both-alive and
    single-survivor daughters into one regression per pole."""

    zeta: Optional[float]
    p_value: Optional[float]
    survived: bool
    valid: bool
    reason: Optional[str] = None


def pooled_aging_test(tree: LineageTree, n: int) -> PooledTestResult:
    """Aging statistic that ignores death, as if every observed daughter
    came from a no-death lineage model.

    Pole regressions pool the both-alive block with the matching
    single-survivor block; the variance estimate averages all squared
    residuals (denominator = total daughter count); the correlation uses
    both-alive pairs only; plug-in moments use the equal-weight two-branch
    mixture. Normalisation is by the total number of observed mothers.
    """
    blocks = gather_blocks(tree, n)
    survived = tree.generation_size(n) > 0
    b, nb, ob = blocks.both, blocks.new_only, blocks.old_only

    def pooled(pole: int, extra: BlockSums):
        if pole == 0:
            n_ = b.n + extra.n
            sx = b.sx + extra.sx
            sxx = b.sxx + extra.sxx
            sd = b.s0 + extra.s0
            sdd = b.s00 + extra.s00
            sxd = b.sx0 + extra.sx0
        else:
            n_ = b.n + extra.n
            sx = b.sx + extra.sx
            sxx = b.sxx + extra.sxx
            sd = b.s1 + extra.s1
            sdd = b.s11 + extra.s11
            sxd = b.sx1 + extra.sx1
        fit = _ols(n_, sx, sxx, sd, sxd)
        if fit is None:
            return None
        merged = BlockSums(n=n_, sx=sx, sxx=sxx)
        if pole == 0:
            merged.s0, merged.s00, merged.sx0 = sd, sdd, sxd
        else:
            merged.s1, merged.s11, merged.sx1 = sd, sdd, sxd
        return fit, merged

    pool0 = pooled(0, nb)
    pool1 = pooled(1, ob)
    if pool0 is None or pool1 is None:
        return PooledTestResult(None, None, survived, False, "degenerate pooled block")
    (a0, b0), sums0 = pool0
    (a1, b1), sums1 = pool1
    total_data = 2 * b.n + nb.n + ob.n
    if total_data == 0:
        return PooledTestResult(None, None, survived, False, "no observed daughters")
    ss = _residual_sq_sum(sums0, 0, a0, b0) + _residual_sq_sum(sums1, 1, a1, b1)
    sigma2 = ss / total_data
    if sigma2 == 0.0 or b.n == 0:
        return PooledTestResult(None, None, survived, False, "zero pooled variance")
    cross = _residual_cross_sum(b, a0, b0, a1, b1)
    rho = cross / (sigma2 * b.n)
    rho = min(max(rho, -1.0 + RHO_CLAMP), 1.0 - RHO_CLAMP)
    comps = (
        (0.5, a0, b0, math.sqrt(sigma2)),
        (0.5, a1, b1, math.sqrt(sigma2)),
    )
    try:
        mus = _stationary_moments_from_components(comps, 2)
    except ValueError as exc:
        return PooledTestResult(None, None, survived, False, str(exc))
    zeta, _ = zeta_statistic(
        blocks.t_star, math.sqrt(sigma2), rho, a0 - a1, b0 - b1, mus[1], mus[2]
    )
    return PooledTestResult(zeta, math.exp(-zeta / 2.0), survived, True)


# -- report serialisation ------------------------------------------------------


def estimate_report_dict(
    tree: LineageTree, n: int, theta_hat: ThetaHat, kappa_hat: KappaHat
) -> dict:
    counts = subtree_counts(tree, n)
    return {
        "formula_version": FORMULA_VERSION,
        "n": n,
        "theta_labels": list(THETA_LABELS),
        "theta": {name: getattr(theta_hat, name) for name in THETA_LABELS},
        "theta_flags": {
            "both_alive_valid": theta_hat.both_alive_valid,
            "new_only_valid": theta_hat.new_only_valid,
            "old_only_valid": theta_hat.old_only_valid,
        },
        "kappa_labels": list(KAPPA_LABELS),
        "kappa": {
            "sigma": kappa_hat.sigma,
            "rho_raw": kappa_hat.rho_raw,
            "rho_clamped": kappa_hat.rho,
            "sigma0": kappa_hat.sigma0,
            "sigma1": kappa_hat.sigma1,
        },
        "kappa_flags": {
            "sigma_valid": kappa_hat.sigma_valid,
            "rho_valid": kappa_hat.rho_valid,
            "sigma0_valid": kappa_hat.sigma0_valid,
            "sigma1_valid": kappa_hat.sigma1_valid,
        },
        "counts": {
            "t_star": counts.t_star,
            "t_both": counts.t_both,
            "t_new_only": counts.t_new_only,
            "t_old_only": counts.t_old_only,
            "t_none": counts.t_none,
        },
    }
