"""Mean models and the damped-Newton estimating-equation solver.

The estimating function is ``U(beta) = sum_k w_k A(beta, Z_k)
(theta_k - mu(beta' Z_k))`` with A either the design row itself or the
mean-function gradient.  Newton steps use the exact analytic Jacobian
(including the dA/dbeta term for the gradient choice) with step halving and a
single Levenberg-style ridge retry on singular Jacobians.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDesignError, NonconvergenceError


@dataclass(frozen=True)
class MeanModel:
    link: str = "logit"  # identity | logit | cloglog
    a_kind: str = "dmu"  # dmu (A = dmu/dbeta) | design (A = Z)

    def __post_init__(self):
        if self.link not in ("identity", "logit", "cloglog"):
            raise ValueError(f"unknown link {self.link!r}")
        if self.a_kind not in ("dmu", "design"):
            raise ValueError(f"unknown a_kind {self.a_kind!r}")


def _link_scalars(link, x):
    """(mu, mu', mu'') of the inverse link at the linear predictor x."""
    x = np.asarray(x, dtype=float)
    if link == "identity":
        one = np.ones_like(x)
        return x, one, np.zeros_like(x)
    if link == "logit":
        # sigmoid via exp of the non-positive half-argument, overflow-free
        ez = np.exp(-np.abs(x))
        mu = np.where(x >= 0, 1.0 / (1.0 + ez), ez / (1.0 + ez))
        mup = mu * (1.0 - mu)
        return mu, mup, mup * (1.0 - 2.0 * mu)
    # cloglog inverse: mu = 1 - exp(-exp(x))
    ex = np.exp(np.minimum(x, 700.0))
    mu = -np.expm1(-ex)
    mup = np.exp(np.minimum(x, 700.0) - ex)
    return mu, mup, mup * (1.0 - ex)


def link_transform(link, p):
    """The link itself (inverse of the response function), for initialization."""
    if link == "identity":
        return p
    if link == "logit":
        return np.log(p / (1.0 - p))
    return np.log(-np.log(1.0 - p))


def mu_eval(model, beta, z):
    """Mean value and gradient d mu / d beta for one covariate row."""
    z = np.asarray(z, dtype=float)
    x = float(beta @ z)
    mu, mup, _ = _link_scalars(model.link, x)
    return float(mu), float(mup) * z


def _a_rows(model, X, mup):
    """A(beta, Z_k) stacked as rows."""
    if model.a_kind == "design":
        return X
    return mup[:, None] * X


def estimating_fn(model, beta, X, theta, weights=None):
    """U(beta) and the analytic Jacobian dU/dbeta."""
    X = np.asarray(X, dtype=float)
    theta = np.asarray(theta, dtype=float)
    n = X.shape[0]
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    x = X @ beta
    mu, mup, mupp = _link_scalars(model.link, x)
    resid = theta - mu
    if model.a_kind == "design":
        u = X.T @ (w * resid)
        jw = -w * mup
    else:
        u = X.T @ (w * mup * resid)
        jw = w * (mupp * resid - mup**2)
    jac = (X * jw[:, None]).T @ X
    return u, jac


def m_hat(model, beta, X, weights=None):
    """Plug-in bread matrix (1/n) sum_k w_k A_k (dmu/dbeta)_k^T.

    Returned with the positive-definite orientation (the sandwich is invariant
    under the sign of the bread).
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    _, mup, _ = _link_scalars(model.link, X @ beta)
    coef = w * mup if model.a_kind == "design" else w * mup**2
    return (X * coef[:, None]).T @ X / n


@dataclass(frozen=True)
class FitResult:
    beta: np.ndarray
    m_hat: np.ndarray
    theta: np.ndarray
    iterations: int
    converged: bool
    residual_norm: float
    model: MeanModel


def _initial_beta(model, X, theta, init):
    if init is not None:
        return np.array(init, dtype=float)
    q = X.shape[1]
    beta = np.zeros(q)
    has_intercept = np.all(X[:, 0] == 1.0)
    if has_intercept:
        mean_theta = float(np.mean(theta))
        if model.link == "identity":
            beta[0] = mean_theta
        else:
            beta[0] = link_transform(model.link, np.clip(mean_theta, 0.02, 0.98))
    return beta


def solve(
    model,
    X,
    theta,
    weights=None,
    init=None,
    tol=1e-10,
    step_tol=1e-12,
    max_iter=100,
    max_halvings=30,
    check_rank=True,
):
    """Damped Newton root of the estimating equation.

    Raises :class:`NonconvergenceError` on iteration cap or an irreparably
    singular Jacobian; the exception carries the last iterate.
    """
    X = np.asarray(X, dtype=float)
    theta = np.asarray(theta, dtype=float)
    n, q = X.shape
    if q > n:
        raise DegenerateDesignError(f"q={q} parameters but only n={n} records")
    if check_rank:
        sv = np.linalg.svd(X, compute_uv=False)
        if sv[-1] <= max(n, q) * np.finfo(float).eps * sv[0]:
            raise DegenerateDesignError("design matrix is not of full column rank")

    beta = _initial_beta(model, X, theta, init)
    u, jac = estimating_fn(model, beta, X, theta, weights)
    unorm = np.max(np.abs(u))
    for it in range(1, max_iter + 1):
        if unorm / n < tol:
            return FitResult(beta, m_hat(model, beta, X, weights), theta,
                             it - 1, True, unorm / n, model)
        try:
            delta = np.linalg.solve(jac, -u)
        except np.linalg.LinAlgError:
            ridge = 1e-8 * np.trace(jac) / q
            try:
                delta = np.linalg.solve(jac + ridge * np.eye(q), -u)
            except np.linalg.LinAlgError:
                raise NonconvergenceError(
                    "singular Jacobian", last_beta=beta, iterations=it
                ) from None
        step = 1.0
        for _ in range(max_halvings + 1):
            cand = beta + step * delta
            # overshooting candidates may overflow the link; non-finite
            # values are rejected below, so float warnings are spurious here
            with np.errstate(all="ignore"):
                u_new, jac_new = estimating_fn(model, cand, X, theta, weights)
            unorm_new = np.max(np.abs(u_new))
            if np.isfinite(unorm_new) and unorm_new < unorm:
                break
            step *= 0.5
        beta, u, jac, unorm = cand, u_new, jac_new, unorm_new
        if np.max(np.abs(step * delta)) < step_tol:
            converged = unorm / n < tol or np.max(np.abs(step * delta)) < step_tol
            return FitResult(beta, m_hat(model, beta, X, weights), theta,
                             it, converged, unorm / n, model)
    if unorm / n < tol:
        return FitResult(beta, m_hat(model, beta, X, weights), theta,
                         max_iter, True, unorm / n, model)
    raise NonconvergenceError(
        f"no convergence in {max_iter} iterations (|U/n| = {unorm / n:.3e})",
        last_beta=beta,
        iterations=max_iter,
    )
