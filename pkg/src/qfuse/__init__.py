"""Quantile fused-LASSO change-point estimation.

Fits a piecewise-constant conditional quantile to a univariate sequence by
minimizing the summed check loss plus a weighted total-variation penalty.
"""

__version__ = "0.1.0"

from .model import (
    ChangePointSet,
    ContractViolation,
    PiecewiseFit,
    QuantileSpec,
    Scenario,
    Signal,
    check_loss,
    extract_changepoints,
    objective_value,
    piecewise_signal,
    scenario_truth,
    segment_levels,
    set_distance,
)
from .prox import ProxParams, prox_check, tv_prox, tv_prox_oracle
from .solver import (
    CertificateReport,
    SolverConfig,
    brute_force_fit,
    fit,
    kkt_certificate,
    l2_fused_fit,
)
from .tuning import (
    Asymptotic,
    Fixed,
    OracleMSE,
    TargetK,
    lambda_asymptotic,
    lambda_for_k,
    lambda_max,
    lambda_oracle_mse,
    parse_mode,
    resolve,
    solution_path,
)
from .distributions import cauchy_icdf, normal_icdf, t3_icdf
from .sim import StudyConfig, StudySummary, detection_error, run_replication, run_study, sample_errors

__all__ = [
    "ChangePointSet", "ContractViolation", "PiecewiseFit", "QuantileSpec", "Scenario", "Signal",
    "check_loss", "extract_changepoints", "objective_value", "piecewise_signal", "scenario_truth",
    "segment_levels", "set_distance",
    "ProxParams", "prox_check", "tv_prox", "tv_prox_oracle",
    "CertificateReport", "SolverConfig", "brute_force_fit", "fit", "kkt_certificate", "l2_fused_fit",
    "Asymptotic", "Fixed", "OracleMSE", "TargetK", "lambda_asymptotic", "lambda_for_k", "lambda_max",
    "lambda_oracle_mse", "parse_mode", "resolve", "solution_path",
    "cauchy_icdf", "normal_icdf", "t3_icdf",
    "StudyConfig", "StudySummary", "detection_error", "run_replication", "run_study", "sample_errors",
]
