"""Monte-Carlo scenario runner for the two survival regression designs.

Data are generated so the pseudo-observation model is correctly specified by
construction: covariates feed a linear predictor through the inverse link, and
Weibull scale parameters are solved so that ``P(T > t0 | Z) = mu(beta0' Z)``.
Censoring is uniform on ``(0, vartheta)`` or absent.  Each replication fits
the model, runs the requested test variants at level alpha, and the report
aggregates rejection rates with Monte-Carlo standard errors.

Reproducibility: replication r of scenario s uses the stream
``SeedSequence(base_seed, spawn_key=(s, r))`` through a counter-based
generator, so any replicate can be re-run in isolation and execution order
(or thread count) never changes results.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import bootstrap as bs
from . import covariance as cov
from . import gee
from . import pseudo
from .errors import PseudoregError, ValidationError
from .functional import KM, EmpiricalDistribution
from .gee import MeanModel, _link_scalars
from .inference import Hypothesis, run_test

ASYMPTOTIC_TESTS = ("corr", "hw", "hc3")
BOOTSTRAP_TESTS = ("b_hw", "b_hc3")
ALL_TESTS = ASYMPTOTIC_TESTS + BOOTSTRAP_TESTS

SCHEME_Q = {"veteran_like": 6, "interaction": 5}


@dataclass(frozen=True)
class ScenarioConfig:
    n: int = 137
    vartheta: float = math.inf  # censoring bound; inf = no censoring
    a: float = 0.85  # Weibull shape
    t0: float = 90.0
    delta1: float = 0.0
    delta2: float = 0.0
    scheme: str = "veteran_like"
    link: str = "logit"
    a_kind: str = "dmu"
    tests: tuple = ALL_TESTS
    n_sim: int = 2000
    b: int = 500
    alpha: float = 0.05
    base_seed: int = 0
    scenario_id: int = 0

    def __post_init__(self):
        if self.scheme not in SCHEME_Q:
            raise ValidationError(f"unknown scheme {self.scheme!r}")
        if self.n < SCHEME_Q[self.scheme] + 1:
            raise ValidationError("n must exceed the parameter count")
        if self.a <= 0 or self.t0 <= 0:
            raise ValidationError("a and t0 must be positive")
        if self.vartheta <= 0:
            raise ValidationError("vartheta must be positive or inf")
        unknown = set(self.tests) - set(ALL_TESTS)
        if unknown:
            raise ValidationError(f"unknown tests {sorted(unknown)}")

    @property
    def beta0(self):
        if self.scheme == "veteran_like":
            return np.array(
                [2.5, self.delta1, self.delta2, 0.0, 0.0, -0.04]
            )
        # interaction scheme (single effect parameter, passed as delta1)
        return np.array([0.3, 0.0, 0.0, self.delta1, 0.1])

    def hypotheses(self):
        if self.scheme == "veteran_like":
            c1 = np.zeros((1, 6))
            c1[0, 1] = 1.0
            c2 = np.zeros((3, 6))
            c2[0, 2] = c2[1, 3] = c2[2, 4] = 1.0
            return (
                Hypothesis(c1, np.zeros(1), "H1:treatment"),
                Hypothesis(c2, np.zeros(3), "H2:celltype"),
            )
        c1 = np.zeros((1, 5))
        c1[0, 1] = 1.0
        c2 = np.zeros((2, 5))
        c2[0, 1] = c2[1, 3] = 1.0
        c3 = np.zeros((3, 5))
        c3[0, 1] = c3[1, 2] = c3[2, 3] = 1.0
        return (
            Hypothesis(c1, np.zeros(1), "H1:main"),
            Hypothesis(c2, np.zeros(2), "H2:main+interaction"),
            Hypothesis(c3, np.zeros(3), "H3:all"),
        )


def replication_rng(config, rep):
    """Counter-based generator for one (scenario, replication) cell."""
    seq = np.random.SeedSequence(
        config.base_seed, spawn_key=(config.scenario_id, rep)
    )
    return np.random.Generator(np.random.Philox(seq))


def gen_covariates(rng, scheme, n):
    """Design matrix (with intercept) for one simulated sample."""
    if scheme == "veteran_like":
        z1 = rng.binomial(1, 0.5, size=n).astype(float)
        cell = rng.integers(0, 4, size=n)  # equal-probability multinomial
        dummies = np.zeros((n, 3))
        for j in range(3):
            dummies[:, j] = cell == j + 1
        age = rng.normal(58.0, 10.5, size=n)
        return np.column_stack([np.ones(n), z1, dummies, age])
    z1 = rng.binomial(1, 0.5, size=n).astype(float)
    z2 = rng.binomial(1, 0.5, size=n).astype(float)
    z4 = rng.uniform(0.0, 1.0, size=n)
    return np.column_stack([np.ones(n), z1, z2, z1 * z2, z4])


def gen_survival(rng, design, beta0, a, t0, link="logit"):
    """Weibull event times with P(T > t0 | Z) = mu(beta0' Z) exactly."""
    mu, _, _ = _link_scalars(link, np.asarray(design) @ beta0)
    if np.any(mu <= 0.0) or np.any(mu >= 1.0):
        raise ValidationError("mu(beta0'Z) left (0,1); invalid generator setup")
    lam = t0 * (-np.log(mu)) ** (-1.0 / a)
    u = rng.uniform(size=mu.size)
    return lam * (-np.log(u)) ** (1.0 / a)


def gen_censoring(rng, vartheta, n):
    """Uniform(0, vartheta) censoring times; inf disables censoring."""
    if math.isinf(vartheta):
        return np.full(n, np.inf)
    return rng.uniform(0.0, vartheta, size=n)


def gen_dataset(rng, config):
    """One simulated sample: (design matrix, observed times, event flags)."""
    design = gen_covariates(rng, config.scheme, config.n)
    t = gen_survival(rng, design, config.beta0, config.a, config.t0,
                     config.link)
    c = gen_censoring(rng, config.vartheta, config.n)
    observed = np.minimum(t, c)
    events = t <= c
    return design, observed, events


@dataclass(frozen=True)
class CellResult:
    """Per-(hypothesis, test) rejection counts for one scenario."""

    config: ScenarioConfig
    rejections: dict  # (hypothesis label, test) -> int
    completed: int
    fit_failures: int

    @property
    def flagged(self):
        return self.fit_failures > 0.02 * self.config.n_sim


def _run_replication(config, rep, hyps):
    rng = replication_rng(config, rep)
    design, observed, events = gen_dataset(rng, config)
    dist = EmpiricalDistribution(observed, events)
    model = MeanModel(config.link, config.a_kind)
    try:
        pv = pseudo.jackknife_pseudo(dist, KM, config.t0)
        fit = gee.solve(model, design, pv.values)
        need_pv = "corr" in config.tests or any(
            t in config.tests for t in BOOTSTRAP_TESTS
        )
        covs = {}
        if need_pv:
            covs["corr"] = cov.sigma_pv(fit, design, model, KM, config.t0,
                                        dist)
        if "hw" in config.tests:
            covs["hw"] = cov.sigma_hw(fit, design, model)
        if "hc3" in config.tests:
            covs["hc3"] = cov.sigma_hc3(fit, design, model)
        decisions = {}
        for test in ASYMPTOTIC_TESTS:
            if test in config.tests:
                for hyp in hyps:
                    res = run_test(fit, covs[test], hyp, config.alpha)
                    decisions[(hyp.label, test)] = res.reject
        boot = [t for t in BOOTSTRAP_TESTS if t in config.tests]
        if boot:
            stds = tuple(t.removeprefix("b_") for t in boot)
            boot_seed = int(rng.integers(0, 2**63 - 1))
            bcfg = bs.BootstrapConfig(b=config.b, alpha=config.alpha,
                                      seed=boot_seed)
            stats, _, _ = bs.replicate_statistics(
                fit, design, model, list(hyps), bcfg, standardizations=stds
            )
            for std in stds:
                for j, hyp in enumerate(hyps):
                    base = run_test(fit, covs["corr"], hyp, config.alpha)
                    q_b = bs.bootstrap_quantile(stats[std][j], config.alpha)
                    decisions[(hyp.label, f"b_{std}")] = base.statistic > q_b
        return decisions
    except PseudoregError:
        return None


def run_scenario(config, threads=1, progress=None):
    """All replications of one scenario cell."""
    hyps = config.hypotheses()
    rejections = {
        (hyp.label, test): 0 for hyp in hyps for test in config.tests
    }
    completed = 0
    failures = 0

    def fold(decisions):
        nonlocal completed, failures
        if decisions is None:
            failures += 1
            return
        completed += 1
        for key, reject in decisions.items():
            if reject:
                rejections[key] += 1

    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for decisions in pool.map(
                _run_replication,
                [config] * config.n_sim,
                range(config.n_sim),
                [hyps] * config.n_sim,
                chunksize=max(1, config.n_sim // (8 * threads)),
            ):
                fold(decisions)
    else:
        for rep in range(config.n_sim):
            fold(_run_replication(config, rep, hyps))
            if progress and (rep + 1) % progress == 0:
                print(f"  scenario {config.scenario_id}: {rep + 1}"
                      f"/{config.n_sim} replications", flush=True)
    return CellResult(config, rejections, completed, failures)


def aggregate(results):
    """Long-format rows: one per (scenario, hypothesis, test)."""
    rows = []
    for res in results:
        cfg = res.config
        denom = max(res.completed, 1)
        for (label, test), count in sorted(res.rejections.items()):
            rate = count / denom
            rows.append({
                "scenario_id": cfg.scenario_id,
                "scheme": cfg.scheme,
                "n": cfg.n,
                "vartheta": cfg.vartheta,
                "delta1": cfg.delta1,
                "delta2": cfg.delta2,
                "hypothesis": label,
                "test": test,
                "rate": rate,
                "mc_se": math.sqrt(rate * (1.0 - rate) / denom),
                "n_sim": cfg.n_sim,
                "completed": res.completed,
                "failures": res.fit_failures,
                "flagged": res.flagged,
            })
    rows.sort(key=lambda r: (r["scheme"], r["n"], r["vartheta"], r["delta1"],
                             r["delta2"], r["hypothesis"], r["test"]))
    return rows
