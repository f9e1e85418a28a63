"""Wald-type tests of general linear hypotheses C beta = b.

The statistic is ``T_n = n (C beta - b)' (C V C')^+ (C beta - b)`` with V the
chosen sandwich covariance and ``+`` the Moore-Penrose pseudoinverse; its null
distribution is chi-squared with rank(C V C') degrees of freedom.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import HypothesisError


def pinv(h, rel_tol=1e-10):
    """SVD pseudoinverse and numerical rank; zero matrix maps to zero, rank 0."""
    h = np.atleast_2d(np.asarray(h, dtype=float))
    u, s, vt = np.linalg.svd(h, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros(h.T.shape), 0
    keep = s > rel_tol * s[0]
    rank = int(np.sum(keep))
    inv_s = np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)
    return (vt.T * inv_s) @ u.T, rank


@dataclass(frozen=True)
class Hypothesis:
    c: np.ndarray
    b: np.ndarray
    label: str = ""

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.c, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "b", b)
        if c.shape[0] < 1:
            raise HypothesisError("hypothesis needs at least one restriction row")
        if b.shape != (c.shape[0],):
            raise HypothesisError(
                f"b has shape {b.shape}, expected ({c.shape[0]},)"
            )
        rank_c = np.linalg.matrix_rank(c)
        rank_aug = np.linalg.matrix_rank(np.column_stack([c, b]))
        if rank_aug != rank_c:
            raise HypothesisError("the system C beta = b has no solution")

    @property
    def p(self):
        return self.c.shape[0]

    @property
    def q(self):
        return self.c.shape[1]


@dataclass(frozen=True)
class TestResult:
    statistic: float
    rank_c: int
    p_value: float
    method: str  # asymptotic | bootstrap
    alpha: float
    reject: bool
    critical_value: float
    label: str = ""


def _chisq_series(a, x):
    # P(a, x) by the standard power series; converges fast for x < a + 1
    term = 1.0 / a
    total = term
    k = a
    for _ in range(500):
        k += 1.0
        term *= x / k
        total += term
        if abs(term) < abs(total) * 1e-16:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _chisq_cf(a, x):
    # Q(a, x) by Lentz's continued fraction; converges fast for x >= a + 1
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 500):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def chisq_sf(x, df):
    """Upper-tail probability of the chi-squared distribution with df dof."""
    if df < 1 or int(df) != df:
        raise ValueError(f"df must be a positive integer, got {df}")
    if x < 0:
        raise ValueError(f"x must be nonnegative, got {x}")
    if x == 0.0:
        return 1.0
    a, half_x = df / 2.0, x / 2.0
    if half_x < a + 1.0:
        return 1.0 - _chisq_series(a, half_x)
    return _chisq_cf(a, half_x)


def chisq_quantile(prob, df):
    """Lower quantile (inverse CDF) by bisection on chisq_sf."""
    if not 0.0 < prob < 1.0:
        raise ValueError(f"prob must be in (0,1), got {prob}")
    lo, hi = 0.0, float(df)
    while chisq_sf(hi, df) > 1.0 - prob:
        hi *= 2.0
    for _ in range(200):
        mid = (lo + hi) / 2.0
        if chisq_sf(mid, df) > 1.0 - prob:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12 * max(1.0, hi):
            break
    return (lo + hi) / 2.0


def wald_statistic(fit, cov, hyp):
    """T_n and the numerical rank of C V C' (the chi-squared dof)."""
    if hyp.q != fit.beta.size:
        raise HypothesisError(
            f"hypothesis has q={hyp.q} but the fit has {fit.beta.size} parameters"
        )
    n = fit.theta.size
    diff = hyp.c @ fit.beta - hyp.b
    middle = hyp.c @ cov.sandwich @ hyp.c.T
    middle_pinv, rank_c = pinv(middle)
    stat = float(n * diff @ middle_pinv @ diff)
    return max(stat, 0.0), rank_c


def run_test(fit, cov, hyp, alpha=0.05):
    """Asymptotic level-alpha Wald test of C beta = b."""
    stat, rank_c = wald_statistic(fit, cov, hyp)
    if rank_c == 0:
        raise HypothesisError("C V C' has rank 0; the hypothesis is vacuous")
    p_value = chisq_sf(stat, rank_c)
    crit = chisq_quantile(1.0 - alpha, rank_c)
    return TestResult(stat, rank_c, p_value, "asymptotic", alpha,
                      stat > crit, crit, hyp.label)
