"""Huber-White, HC3 and corrected plug-in covariance estimators.

All three estimate the meat matrix Sigma of the sandwich
``M^-1 Sigma M^-T`` for the pseudo-observation estimating equation.  The
corrected plug-in estimator augments the raw residual score with the exact
second-order influence term ``h1`` of the estimand functional; without
censoring the functional is linear, h1 vanishes, and PV coincides with HW.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import functional as fn
from .errors import ConditioningError, LeverageError
from .gee import _a_rows, _link_scalars


@dataclass(frozen=True)
class CovarianceEstimate:
    kind: str  # hw | hc3 | pv | bootstrap_empirical
    sigma: np.ndarray
    sandwich: np.ndarray

    def std_errors(self, n):
        """Reported standard errors sqrt(diag(sandwich)/n)."""
        return np.sqrt(np.diag(self.sandwich) / n)


def _score_pieces(fit, design, model, weights=None):
    X = np.asarray(design, dtype=float)
    n = X.shape[0]
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    mu, mup, _ = _link_scalars(model.link, X @ fit.beta)
    A = _a_rows(model, X, mup)
    resid = fit.theta - mu
    return X, n, w, mu, A, resid


def sandwich(m_hat, sigma):
    """M^-1 Sigma M^-T, symmetrized to remove rounding asymmetry."""
    cond = np.linalg.cond(m_hat)
    if not np.isfinite(cond) or cond >= 1e12:
        raise ConditioningError(
            f"bread matrix is near singular (condition number {cond:.3e})"
        )
    m_inv = np.linalg.inv(m_hat)
    s = m_inv @ sigma @ m_inv.T
    return (s + s.T) / 2.0


def sigma_hw(fit, design, model, weights=None):
    """Huber-White meat: (1/n) sum_k w_k A_k A_k' (theta_k - mu_k)^2."""
    _, n, w, _, A, resid = _score_pieces(fit, design, model, weights)
    sigma = (A * (w * resid**2)[:, None]).T @ A / n
    sigma = (sigma + sigma.T) / 2.0
    return CovarianceEstimate("hw", sigma, sandwich(fit.m_hat, sigma))


def leverages(design):
    """Diagonal of the hat matrix of the raw design (link-free)."""
    X = np.asarray(design, dtype=float)
    q_mat, r_mat = np.linalg.qr(X)
    if np.min(np.abs(np.diag(r_mat))) <= X.shape[1] * np.finfo(float).eps * np.max(
        np.abs(np.diag(r_mat))
    ):
        raise LeverageError("X'X is singular; leverages undefined")
    return np.sum(q_mat**2, axis=1)


def sigma_hc3(fit, design, model, weights=None):
    """HC3 meat: HW summands inflated by (1 - d_kk)^(-2)."""
    X, n, w, _, A, resid = _score_pieces(fit, design, model, weights)
    d = leverages(X)
    if np.any(d >= 1.0 - 1e-12):
        raise LeverageError("a leverage d_kk reached 1; HC3 inflation diverges")
    infl = (1.0 - d) ** -2
    sigma = (A * (w * infl * resid**2)[:, None]).T @ A / n
    sigma = (sigma + sigma.T) / 2.0
    return CovarianceEstimate("hc3", sigma, sandwich(fit.m_hat, sigma))


def sigma_pv(fit, design, model, functional, t0, dist, weights=None, d2=None):
    """Corrected plug-in meat (Eq.-(7)-style estimator).

    Score of subject k: ``A_k (phi(F_n) + phi'(X_k) - mu_k) + h1(X_k)`` with
    ``h1(X_k) = (1/n) sum_j d2[k, j] A_j``.  The pairwise second-derivative
    matrix ``d2`` can be passed in to share across covariance calls.
    """
    X, n, w, mu, A, _ = _score_pieces(fit, design, model, weights)
    full = fn.value(functional, dist, t0)
    d1 = fn.d1_all(functional, dist, t0)
    if d2 is None:
        d2 = fn.d2_matrix(functional, dist, t0)
    wa = A if weights is None else w[:, None] * A
    scores = A * (full + d1 - mu)[:, None] + (d2 @ wa) / n
    sigma = (scores * w[:, None]).T @ scores / n
    sigma = (sigma + sigma.T) / 2.0
    return CovarianceEstimate("pv", sigma, sandwich(fit.m_hat, sigma))


def estimate(kind, fit, design, model, functional=None, t0=None, dist=None,
             weights=None):
    """Dispatch on the covariance kind name."""
    if kind == "hw":
        return sigma_hw(fit, design, model, weights)
    if kind == "hc3":
        return sigma_hc3(fit, design, model, weights)
    if kind == "pv":
        if functional is None or t0 is None or dist is None:
            raise ValueError("pv covariance needs functional, t0 and dist")
        return sigma_pv(fit, design, model, functional, t0, dist, weights)
    raise ValueError(f"unknown covariance kind {kind!r}")
