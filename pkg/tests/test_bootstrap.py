"""Multinomial bootstrap: weights, refits, statistics, quantiles."""

import numpy as np
import pytest

from pseudoreg import bootstrap as bs
from pseudoreg.bootstrap import BootstrapConfig, bootstrap_quantile, draw_weights
from pseudoreg.inference import Hypothesis


@pytest.fixture(scope="module")
def hyps():
    c1 = np.zeros((1, 6))
    c1[0, 1] = 1.0
    c2 = np.zeros((3, 6))
    c2[0, 2] = c2[1, 3] = c2[2, 4] = 1.0
    return [Hypothesis(c1, np.zeros(1), "trt"),
            Hypothesis(c2, np.zeros(3), "celltype")]


def test_config_validation():
    with pytest.raises(ValueError):
        BootstrapConfig(b=50)
    with pytest.raises(ValueError):
        BootstrapConfig(alpha=0.0)
    with pytest.raises(ValueError):
        BootstrapConfig(retry_limit=30)
    with pytest.raises(ValueError):
        BootstrapConfig(standardization="hc2")


def test_draw_weights_properties():
    rng = np.random.default_rng(0)
    w = draw_weights(rng, 100)
    assert w.sum() == 100.0
    assert np.all(w >= 0) and np.all(w == np.floor(w))
    with pytest.raises(ValueError):
        draw_weights(rng, 0)


def test_rng_reproducible():
    cfg = BootstrapConfig(b=100, seed=7)
    w1 = draw_weights(cfg.rng(), 50)
    w2 = draw_weights(cfg.rng(), 50)
    assert np.array_equal(w1, w2)


def test_bootstrap_fit_warm_start(veteran):
    cfg = BootstrapConfig(b=100, seed=1)
    rng = cfg.rng()
    w = draw_weights(rng, veteran["dataset"].n)
    rep = bs.bootstrap_fit(veteran["fit"], veteran["design"].rows,
                           veteran["model"], w)
    assert rep.converged
    assert rep.fit.iterations <= 20
    assert np.array_equal(rep.weights, w)


def test_bootstrap_statistic_nonnegative(veteran, hyps):
    cfg = BootstrapConfig(b=100, seed=2)
    rng = cfg.rng()
    w = draw_weights(rng, veteran["dataset"].n)
    rep = bs.bootstrap_fit(veteran["fit"], veteran["design"].rows,
                           veteran["model"], w)
    for std in ("hw", "hc3"):
        t = bs.bootstrap_statistic(rep, veteran["fit"],
                                   veteran["design"].rows, veteran["model"],
                                   hyps[0], std)
        assert t >= 0.0


def test_unconverged_replicate_rejected(veteran, hyps):
    rep = bs.BootstrapReplicate(np.ones(5), veteran["fit"].beta, False)
    with pytest.raises(ValueError):
        bs.bootstrap_statistic(rep, veteran["fit"], veteran["design"].rows,
                               veteran["model"], hyps[0])


def test_batched_matches_scalar(veteran, hyps):
    stats = {}
    for method in ("batched", "scalar"):
        cfg = BootstrapConfig(b=200, seed=11, retry_limit=0)
        got, _, fails = bs.replicate_statistics(
            veteran["fit"], veteran["design"].rows, veteran["model"], hyps,
            cfg, standardizations=("hw", "hc3"), method=method,
        )
        stats[method] = (got, fails)
    for std in ("hw", "hc3"):
        for j in range(2):
            a = stats["batched"][0][std][j]
            b = stats["scalar"][0][std][j]
            both = np.isfinite(a) & np.isfinite(b)
            # replicates solved by both paths agree to solver tolerance
            assert both.sum() >= 180
            assert np.max(np.abs(a[both] - b[both])) < 1e-3


def test_replicate_statistics_reproducible(veteran, hyps):
    cfg = BootstrapConfig(b=150, seed=3)
    a, _, _ = bs.replicate_statistics(veteran["fit"], veteran["design"].rows,
                                      veteran["model"], hyps, cfg)
    b, _, _ = bs.replicate_statistics(veteran["fit"], veteran["design"].rows,
                                      veteran["model"], hyps, cfg)
    assert np.array_equal(a["hw"][0], b["hw"][0], equal_nan=True)


def test_bootstrap_quantile_order_statistic():
    stats = np.arange(1.0, 101.0)  # B = 100
    # ceil(101 * 0.95) = 96 -> 96th order statistic
    assert bootstrap_quantile(stats, 0.05) == 96.0
    # index clipped to B when (B+1)(1-alpha) > B
    assert bootstrap_quantile(stats, 0.001) == 100.0
    # NaNs (failed replicates) are ignored
    with_nan = np.concatenate([stats, [np.nan] * 10])
    assert bootstrap_quantile(with_nan, 0.05) == 96.0


def test_bootstrap_quantile_nonincreasing_in_alpha():
    rng = np.random.default_rng(5)
    stats = rng.chisquare(3, size=500)
    alphas = (0.01, 0.05, 0.10, 0.25)
    qs = [bootstrap_quantile(stats, a) for a in alphas]
    assert all(qs[i + 1] <= qs[i] for i in range(len(qs) - 1))


def test_bootstrap_centering_identity(veteran, hyps):
    # mean of C(beta^B - beta_hat) over replicates shrinks like 1/sqrt(B)
    cfg = BootstrapConfig(b=1000, seed=6)
    _, betas, _ = bs.replicate_statistics(
        veteran["fit"], veteran["design"].rows, veteran["model"], hyps, cfg,
        collect_betas=True)
    finite = betas[np.all(np.isfinite(betas), axis=1)]
    diffs = (hyps[1].c @ (finite - veteran["fit"].beta).T).T
    mean = diffs.mean(axis=0)
    se = diffs.std(axis=0, ddof=1) / np.sqrt(finite.shape[0])
    assert np.all(np.abs(mean) <= 3.0 * se)


def test_bootstrap_test_result(veteran, hyps):
    from pseudoreg import covariance as cov
    from pseudoreg.functional import KM

    pv_cov = cov.sigma_pv(veteran["fit"], veteran["design"].rows,
                          veteran["model"], KM, veteran["t0"],
                          veteran["dist"])
    cfg = BootstrapConfig(b=200, seed=5)
    res = bs.bootstrap_test(veteran["fit"], pv_cov, hyps[1], cfg,
                            design=veteran["design"].rows,
                            model=veteran["model"])
    assert res.method == "bootstrap"
    assert 0.0 < res.p_value <= 1.0
    assert res.reject == (res.statistic > res.critical_value)
    # celltype effect is strong on the fixture: expect rejection
    assert res.reject


def test_bootstrap_test_needs_design(veteran, hyps):
    from pseudoreg import covariance as cov

    hw = cov.sigma_hw(veteran["fit"], veteran["design"].rows, veteran["model"])
    with pytest.raises(ValueError):
        bs.bootstrap_test(veteran["fit"], hw, hyps[0],
                          BootstrapConfig(b=100, seed=0))


def test_bootstrap_covariance_shape(veteran):
    cfg = BootstrapConfig(b=300, seed=9)
    est = bs.bootstrap_covariance(veteran["fit"], veteran["design"].rows,
                                  veteran["model"], cfg)
    assert est.kind == "bootstrap_empirical"
    assert est.sandwich.shape == (6, 6)
    assert np.allclose(est.sandwich, est.sandwich.T)
    assert np.all(np.linalg.eigvalsh(est.sandwich) >= -1e-10)
