"""Pseudoinverse, chi-squared tails, hypothesis objects and Wald tests."""

import numpy as np
import pytest
from scipy import stats as sps  # test-only oracle; not a runtime dependency

from pseudoreg.errors import HypothesisError
from pseudoreg.functional import KM
from pseudoreg.inference import (
    Hypothesis,
    chisq_quantile,
    chisq_sf,
    pinv,
    run_test,
    wald_statistic,
)


def test_pinv_penrose_conditions():
    rng = np.random.default_rng(0)
    for _ in range(20):
        m, k = rng.integers(1, 6, 2)
        a = rng.normal(size=(m, k))
        ap, rank = pinv(a)
        assert rank == np.linalg.matrix_rank(a)
        assert np.allclose(a @ ap @ a, a, atol=1e-10)
        assert np.allclose(ap @ a @ ap, ap, atol=1e-10)
        assert np.allclose((a @ ap).T, a @ ap, atol=1e-10)
        assert np.allclose((ap @ a).T, ap @ a, atol=1e-10)


def test_pinv_zero_matrix():
    ap, rank = pinv(np.zeros((3, 2)))
    assert rank == 0 and ap.shape == (2, 3) and np.all(ap == 0.0)


def test_pinv_rank_deficient():
    a = np.array([[1.0, 2.0], [2.0, 4.0]])
    ap, rank = pinv(a)
    assert rank == 1
    assert np.allclose(a @ ap @ a, a, atol=1e-12)


def test_chisq_sf_against_scipy():
    for df in (1, 2, 3, 5, 10, 30):
        for x in (0.0, 0.5, 1.0, 3.84, 7.81, 20.0, 80.0):
            assert chisq_sf(x, df) == pytest.approx(
                sps.chi2.sf(x, df), rel=1e-10, abs=1e-14
            )


def test_chisq_quantile_against_scipy():
    for df in (1, 3, 6):
        for p in (0.5, 0.9, 0.95, 0.99):
            assert chisq_quantile(p, df) == pytest.approx(
                sps.chi2.ppf(p, df), rel=1e-8
            )


def test_chisq_validation():
    with pytest.raises(ValueError):
        chisq_sf(1.0, 0)
    with pytest.raises(ValueError):
        chisq_sf(-1.0, 2)
    with pytest.raises(ValueError):
        chisq_quantile(1.0, 2)


def test_hypothesis_validation():
    with pytest.raises(HypothesisError):
        Hypothesis(np.array([[1.0, 0.0], [1.0, 0.0]]), np.array([0.0, 1.0]))
    with pytest.raises(HypothesisError):
        Hypothesis(np.array([[1.0, 0.0]]), np.array([0.0, 1.0]))
    h = Hypothesis(np.array([1.0, 0.0, 0.0]), np.array([0.5]), "one row")
    assert h.p == 1 and h.q == 3 and h.c.shape == (1, 3)


def test_wald_statistic_invariance_under_row_scaling(veteran):
    from pseudoreg import covariance as cov

    fit = veteran["fit"]
    est = cov.sigma_hw(fit, veteran["design"].rows, veteran["model"])
    c = np.zeros((1, 6))
    c[0, 1] = 1.0
    s1, r1 = wald_statistic(fit, est, Hypothesis(c, np.zeros(1)))
    s2, r2 = wald_statistic(fit, est, Hypothesis(5.0 * c, np.zeros(1)))
    assert s1 == pytest.approx(s2, rel=1e-10)
    assert r1 == r2 == 1


def test_wald_statistic_scale_invariance(veteran):
    # replacing V by c*V divides T by c and leaves the rank unchanged
    import dataclasses

    from pseudoreg import covariance as cov

    fit = veteran["fit"]
    est = cov.sigma_hw(fit, veteran["design"].rows, veteran["model"])
    c1 = np.zeros((1, 6))
    c1[0, 1] = 1.0
    hyp = Hypothesis(c1, np.zeros(1), "trt")
    stat, rank = wald_statistic(fit, est, hyp)
    for c in (0.5, 3.0):
        scaled = dataclasses.replace(est, sandwich=c * est.sandwich)
        stat_c, rank_c = wald_statistic(fit, scaled, hyp)
        assert stat_c == pytest.approx(stat / c, rel=1e-10)
        assert rank_c == rank


def test_null_calibration_gaussian_toy():
    # identity link, uncensored Gaussian responses: rejection rate at
    # alpha = 0.05 stays within [3.8%, 6.2%] over 2000 replications
    from pseudoreg import covariance as cov
    from pseudoreg import gee
    from pseudoreg.gee import MeanModel

    rng = np.random.default_rng(12)
    model = MeanModel("identity", "design")
    c1 = np.zeros((1, 3))
    c1[0, 1] = 1.0
    hyp = Hypothesis(c1, np.zeros(1), "H0: beta1 = 0")
    n, rejections = 200, 0
    for _ in range(2000):
        X = np.column_stack([np.ones(n), rng.normal(size=(n, 2))])
        y = 0.4 + 0.7 * X[:, 2] + rng.normal(scale=0.5, size=n)
        fit = gee.solve(model, X, y)
        est = cov.sigma_hw(fit, X, model)
        if run_test(fit, est, hyp).reject:
            rejections += 1
    rate = rejections / 2000 * 100
    assert 3.8 <= rate <= 6.2


def test_wald_statistic_redundant_rows_keep_rank(veteran):
    from pseudoreg import covariance as cov

    fit = veteran["fit"]
    est = cov.sigma_hw(fit, veteran["design"].rows, veteran["model"])
    c = np.zeros((2, 6))
    c[0, 1] = 1.0
    c[1, 1] = 2.0  # linearly dependent restriction
    stat, rank = wald_statistic(fit, est, Hypothesis(c, np.zeros(2)))
    c1 = c[:1]
    stat1, _ = wald_statistic(fit, est, Hypothesis(c1, np.zeros(1)))
    assert rank == 1
    assert stat == pytest.approx(stat1, rel=1e-10)


def test_wald_dimension_mismatch(veteran):
    from pseudoreg import covariance as cov

    fit = veteran["fit"]
    est = cov.sigma_hw(fit, veteran["design"].rows, veteran["model"])
    with pytest.raises(HypothesisError):
        wald_statistic(fit, est, Hypothesis(np.ones((1, 4)), np.zeros(1)))


def test_run_test_decision(veteran):
    from pseudoreg import covariance as cov

    fit = veteran["fit"]
    est = cov.sigma_pv(fit, veteran["design"].rows, veteran["model"],
                       KM, veteran["t0"], veteran["dist"])
    c = np.zeros((3, 6))
    c[0, 2] = c[1, 3] = c[2, 4] = 1.0
    res = run_test(fit, est, Hypothesis(c, np.zeros(3), "celltype"))
    assert res.method == "asymptotic" and res.rank_c == 3
    assert res.reject == (res.statistic > res.critical_value)
    assert res.p_value == pytest.approx(chisq_sf(res.statistic, 3))


def test_true_restriction_statistic_is_zero(veteran):
    from pseudoreg import covariance as cov

    fit = veteran["fit"]
    est = cov.sigma_hw(fit, veteran["design"].rows, veteran["model"])
    c = np.zeros((1, 6))
    c[0, 1] = 1.0
    b = np.array([fit.beta[1]])
    stat, _ = wald_statistic(fit, est, Hypothesis(c, b))
    assert stat == pytest.approx(0.0, abs=1e-18)
