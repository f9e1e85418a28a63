"""Pseudo-observation regression for right-censored survival data.

Jackknife pseudo-values of the Kaplan-Meier survival probability at a fixed
time point, GEE-style estimation, robust covariance estimators (Huber-White,
HC3, corrected plug-in), Wald-type tests of general linear hypotheses, a
studentized multinomial bootstrap, and a Monte-Carlo simulation harness.
"""

__version__ = "0.1.0"

from .bootstrap import (
    BootstrapConfig,
    bootstrap_covariance,
    bootstrap_fit,
    bootstrap_statistic,
    bootstrap_test,
    draw_weights,
)
from .covariance import CovarianceEstimate, sandwich, sigma_hc3, sigma_hw, sigma_pv
from .data_model import (
    ColumnSchema,
    Dataset,
    DesignSpec,
    FactorTerm,
    InteractionTerm,
    NumericTerm,
    Status,
    SurvivalRecord,
    encode_design,
    load_csv,
    parse_design,
    veteran_design_spec,
    veteran_schema,
)
from .functional import (
    KM,
    MEAN,
    EmpiricalDistribution,
    EstimandFunctional,
    ObservationMark,
    fd_directional,
    km_curve,
    km_d1,
    km_d2,
    km_value,
)
from .gee import FitResult, MeanModel, estimating_fn, m_hat, mu_eval, solve
from .inference import (
    Hypothesis,
    TestResult,
    chisq_quantile,
    chisq_sf,
    pinv,
    run_test,
    wald_statistic,
)
from .pseudo import (
    EssentialDecomposition,
    PseudoValues,
    essential_part,
    jackknife_pseudo,
)
from .simulation import (
    ScenarioConfig,
    aggregate,
    gen_censoring,
    gen_covariates,
    gen_dataset,
    gen_survival,
    run_scenario,
)
from .ustats import (
    Kernel,
    bootstrap_u_statistic,
    bootstrap_v_statistic,
    u_statistic,
    v_statistic,
)
