"""Estimating-equation solver against closed-form and IRLS oracles."""

import numpy as np
import pytest

from pseudoreg import gee
from pseudoreg.errors import DegenerateDesignError, NonconvergenceError
from pseudoreg.gee import MeanModel, estimating_fn, m_hat, mu_eval, solve


def irls_logistic(X, y, tol=1e-12, max_iter=200):
    """Reference iteratively-reweighted least squares for the logistic GLM."""
    beta = np.zeros(X.shape[1])
    for _ in range(max_iter):
        eta = X @ beta
        mu = 1.0 / (1.0 + np.exp(-eta))
        w = mu * (1.0 - mu)
        z = eta + (y - mu) / np.maximum(w, 1e-12)
        wx = X * w[:, None]
        beta_new = np.linalg.solve(X.T @ wx, wx.T @ z)
        if np.max(np.abs(beta_new - beta)) < tol:
            return beta_new
        beta = beta_new
    return beta


def sample_logistic(rng, n=120, q=3):
    X = np.column_stack([np.ones(n), rng.normal(size=(n, q - 1))])
    beta0 = rng.normal(scale=0.7, size=q)
    p = 1.0 / (1.0 + np.exp(-(X @ beta0)))
    y = (rng.uniform(size=n) < p).astype(float)
    return X, y


def test_model_validation():
    with pytest.raises(ValueError):
        MeanModel("probit", "dmu")
    with pytest.raises(ValueError):
        MeanModel("logit", "score")


def test_link_scalars_logit_stable():
    mu, mup, mupp = gee._link_scalars("logit", np.array([-800.0, 0.0, 800.0]))
    assert np.all(np.isfinite(mu)) and np.all(np.isfinite(mupp))
    assert mu[0] == 0.0 and mu[2] == 1.0
    assert mu[1] == 0.5 and mup[1] == 0.25 and mupp[1] == 0.0


def test_link_scalars_cloglog():
    x = np.array([-1.0, 0.0, 1.0])
    mu, mup, _ = gee._link_scalars("cloglog", x)
    assert np.allclose(mu, 1.0 - np.exp(-np.exp(x)))
    h = 1e-6
    fd = (gee._link_scalars("cloglog", x + h)[0]
          - gee._link_scalars("cloglog", x - h)[0]) / (2 * h)
    assert np.allclose(mup, fd, atol=1e-6)


def test_link_transform_roundtrip():
    p = np.array([0.05, 0.4, 0.9])
    for link in ("identity", "logit", "cloglog"):
        x = gee.link_transform(link, p)
        assert np.allclose(gee._link_scalars(link, x)[0], p, atol=1e-12)


def test_mu_eval_gradient():
    model = MeanModel("logit", "dmu")
    beta = np.array([0.3, -0.2])
    z = np.array([1.0, 2.0])
    mu, grad = mu_eval(model, beta, z)
    h = 1e-7
    for j in range(2):
        db = beta.copy()
        db[j] += h
        fd = (mu_eval(model, db, z)[0] - mu) / h
        assert grad[j] == pytest.approx(fd, abs=1e-5)


def test_design_kind_matches_irls():
    # with A = Z the root of the estimating equation is the ML logistic fit
    rng = np.random.default_rng(0)
    for _ in range(5):
        X, y = sample_logistic(rng)
        fit = solve(MeanModel("logit", "design"), X, y)
        ref = irls_logistic(X, y)
        assert np.max(np.abs(fit.beta - ref)) < 1e-8
        assert fit.converged


def test_identity_link_is_weighted_least_squares():
    rng = np.random.default_rng(1)
    n = 60
    X = np.column_stack([np.ones(n), rng.normal(size=n)])
    theta = rng.normal(size=n)
    w = rng.uniform(0.5, 2.0, size=n)
    fit = solve(MeanModel("identity", "design"), X, theta, weights=w)
    ref = np.linalg.solve((X * w[:, None]).T @ X, (X * w[:, None]).T @ theta)
    assert np.allclose(fit.beta, ref, atol=1e-10)


def test_dmu_and_design_agree_on_balanced_problem():
    # both A choices solve moment equations with the same root when the
    # model is saturated in the intercept-only case
    rng = np.random.default_rng(2)
    n = 80
    X = np.ones((n, 1))
    theta = rng.uniform(0.2, 0.8, size=n)
    b1 = solve(MeanModel("logit", "design"), X, theta).beta
    b2 = solve(MeanModel("logit", "dmu"), X, theta).beta
    assert b1[0] == pytest.approx(b2[0], abs=1e-9)
    mu = 1.0 / (1.0 + np.exp(-b1[0]))
    assert mu == pytest.approx(theta.mean(), abs=1e-10)


def test_estimating_fn_jacobian_matches_fd():
    rng = np.random.default_rng(3)
    X, y = sample_logistic(rng, n=40)
    beta = rng.normal(scale=0.3, size=3)
    for a_kind in ("design", "dmu"):
        model = MeanModel("logit", a_kind)
        u, jac = estimating_fn(model, beta, X, y)
        h = 1e-7
        for j in range(3):
            db = beta.copy()
            db[j] += h
            fd = (estimating_fn(model, db, X, y)[0] - u) / h
            assert np.allclose(jac[:, j], fd, atol=1e-4)


def test_m_hat_positive_definite_at_fit(veteran):
    fit = veteran["fit"]
    eigs = np.linalg.eigvalsh(fit.m_hat)
    assert np.all(eigs > 0)


def test_warm_start_converges_in_few_iterations(veteran):
    fit = veteran["fit"]
    refit = solve(veteran["model"], veteran["design"].rows,
                  veteran["pseudo"].values, init=fit.beta)
    assert refit.iterations <= 2
    assert np.allclose(refit.beta, fit.beta, atol=1e-9)


def test_rank_deficient_design_raises():
    X = np.column_stack([np.ones(10), np.arange(10.0), 2 * np.arange(10.0)])
    with pytest.raises(DegenerateDesignError):
        solve(MeanModel("logit", "design"), X, np.linspace(0.1, 0.9, 10))


def test_more_parameters_than_rows_raises():
    X = np.ones((3, 4))
    with pytest.raises(DegenerateDesignError):
        solve(MeanModel("logit", "design"), X, np.array([0.5, 0.4, 0.6]))


def test_nonconvergence_carries_last_iterate():
    # perfectly separated logistic data diverges; the exception must carry
    # the final iterate
    X = np.column_stack([np.ones(8), np.concatenate([-np.ones(4), np.ones(4)])])
    y = np.concatenate([np.zeros(4), np.ones(4)])
    with pytest.raises(NonconvergenceError) as exc:
        solve(MeanModel("logit", "design"), X, y, max_iter=8)
    assert exc.value.last_beta is not None
    assert exc.value.iterations == 8


def test_residual_norm_below_tolerance(veteran):
    assert veteran["fit"].residual_norm < 1e-10
    assert veteran["fit"].converged


@pytest.mark.parametrize("link", ["identity", "logit"])
@pytest.mark.parametrize("a_kind", ["design", "dmu"])
def test_covariate_rescaling_equivariance(link, a_kind):
    # scaling a covariate column by c scales its coefficient by 1/c
    rng = np.random.default_rng(21)
    X, y = sample_logistic(rng)
    if link == "identity":
        y = y - 0.5 + 0.3 * rng.normal(size=y.size)
    model = MeanModel(link, a_kind)
    base = solve(model, X, y)
    c = 4.0
    Xs = X.copy()
    Xs[:, 1] *= c
    scaled = solve(model, Xs, y)
    expect = base.beta.copy()
    expect[1] /= c
    assert np.max(np.abs(scaled.beta - expect)) < 1e-8


def test_all_ones_weights_reproduce_unweighted_fit():
    rng = np.random.default_rng(22)
    X, y = sample_logistic(rng)
    model = MeanModel("logit", "dmu")
    plain = solve(model, X, y)
    weighted = solve(model, X, y, weights=np.ones(X.shape[0]))
    assert np.array_equal(plain.beta, weighted.beta)
    assert plain.iterations == weighted.iterations
