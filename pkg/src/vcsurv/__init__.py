"""Varying-coefficient marginal hazard models for clustered failure-time data.

Local pseudo-partial likelihood estimation of beta(v) and g(v) in

    lambda_ij(t) = lambda_0j(t) exp{ beta(V_ij)' Z_ij + g(V_ij) },

with robust sandwich variance estimation, one-step curve fitting,
Breslow baseline hazards, a per-failure-type weighted-average estimator,
a copula-based cluster simulator and a Monte Carlo benchmark harness.
"""

__version__ = "0.1.0"

from .data import Dataset, SubjectRecord, event_times, load_dataset, risk_set
from .errors import (
    DataError,
    NoLocalData,
    NonConvergence,
    NumericalError,
    SingularAHat,
    SingularHessian,
    SingularSigma,
    VcsurvError,
)
from .kernels import EPANECHNIKOV, GAUSSIAN, Kernel, get_kernel, kernel_moments
from .loclik import (
    LocalDesign,
    LocalParams,
    local_hessian,
    local_loglik,
    local_score,
    s_hat,
)
from .fitting import (
    CurveEstimate,
    FitOptions,
    LocalFit,
    default_anchors,
    default_grid,
    fit_curve,
    integrate_gprime,
    maximize_local,
    one_step,
)
from .baseline import SmoothedHazard, StepHazard, breslow, smooth_hazard
from .inference import (
    SandwichParts,
    a_hat,
    b_hat,
    confidence_band,
    curve_standard_errors,
    local_variance,
    pi_hat,
    residual_increments,
    sandwich,
)
from .multitype import (
    TypeStack,
    WeightedCurve,
    WeightedEstimate,
    combine,
    cross_cov,
    fit_per_type,
    fit_weighted_curve,
    optimal_weights,
    sigma_star,
    w_matrix,
    w_vector,
)
from .simulate import (
    MvNormalZ,
    RawSample,
    SimScenario,
    StdNormalZ,
    clayton_exponentials,
    gen_censoring,
    gen_covariates,
    gen_failure_times,
    set1_scenario,
    set2_scenario,
    simulate_dataset,
    simulate_raw,
)
from .bench import (
    AseStat,
    BandwidthSpec,
    BenchPlan,
    EstimatorSpec,
    GridStat,
    McSummary,
    ProbeStat,
    RaseValue,
    TruthSet,
    rase,
    report,
    report_plan,
    run_mc,
    run_plan,
    set1_truth,
    set2_truth,
    table1_plan,
    table2_plan,
    table3_plan,
)

__all__ = [
    "__version__",
    "Dataset",
    "SubjectRecord",
    "load_dataset",
    "risk_set",
    "event_times",
    "Kernel",
    "GAUSSIAN",
    "EPANECHNIKOV",
    "get_kernel",
    "kernel_moments",
    "LocalDesign",
    "LocalParams",
    "local_loglik",
    "local_score",
    "local_hessian",
    "s_hat",
    "FitOptions",
    "LocalFit",
    "CurveEstimate",
    "maximize_local",
    "one_step",
    "fit_curve",
    "integrate_gprime",
    "default_grid",
    "default_anchors",
    "StepHazard",
    "SmoothedHazard",
    "breslow",
    "smooth_hazard",
    "SandwichParts",
    "a_hat",
    "b_hat",
    "residual_increments",
    "pi_hat",
    "sandwich",
    "local_variance",
    "curve_standard_errors",
    "confidence_band",
    "TypeStack",
    "WeightedEstimate",
    "WeightedCurve",
    "fit_per_type",
    "w_matrix",
    "w_vector",
    "cross_cov",
    "sigma_star",
    "optimal_weights",
    "combine",
    "fit_weighted_curve",
    "SimScenario",
    "MvNormalZ",
    "StdNormalZ",
    "RawSample",
    "clayton_exponentials",
    "gen_covariates",
    "gen_failure_times",
    "gen_censoring",
    "simulate_raw",
    "AseStat",
    "BandwidthSpec",
    "BenchPlan",
    "EstimatorSpec",
    "GridStat",
    "McSummary",
    "ProbeStat",
    "RaseValue",
    "TruthSet",
    "rase",
    "report",
    "report_plan",
    "run_mc",
    "run_plan",
    "set1_truth",
    "set2_truth",
    "table1_plan",
    "table2_plan",
    "table3_plan",
    "simulate_dataset",
    "set1_scenario",
    "set2_scenario",
    "VcsurvError",
    "DataError",
    "NumericalError",
    "NoLocalData",
    "NonConvergence",
    "SingularHessian",
    "SingularAHat",
    "SingularSigma",
]
