"""Shared fixtures: the bundled veteran analysis and random survival samples."""

import numpy as np
import pytest

from pseudoreg import data_model as dm
from pseudoreg import gee, pseudo
from pseudoreg.functional import KM, EmpiricalDistribution
from pseudoreg.gee import MeanModel


def random_censored_dist(rng, n, censor_scale=1.5):
    """Continuous-time censored sample with mass at risk past its t0."""
    t = rng.exponential(1.0, n) + 0.05
    c = rng.exponential(censor_scale, n) + 0.05
    times = np.minimum(t, c)
    events = t <= c
    t0 = float(np.quantile(times, 0.6))
    if not np.any(times >= t0):
        t0 = float(times.max())
    return EmpiricalDistribution(times, events), t0


@pytest.fixture(scope="session")
def veteran():
    """Dataset, design and fitted model of the bundled fixture at t0 = 90."""
    from importlib import resources

    path = str(resources.files("pseudoreg").joinpath("data/veteran.csv"))
    dataset = dm.load_csv(path, dm.veteran_schema())
    design = dm.encode_design(dataset, dm.veteran_design_spec())
    dist = dataset.distribution()
    model = MeanModel("logit", "dmu")
    pv = pseudo.jackknife_pseudo(dist, KM, 90.0)
    fit = gee.solve(model, design.rows, pv.values)
    return {
        "path": path,
        "dataset": dataset,
        "design": design,
        "dist": dist,
        "model": model,
        "pseudo": pv,
        "fit": fit,
        "t0": 90.0,
    }
