"""Outlier-robust Gaussian process regression with explicit bias models.

Two robust models are provided. The constant bias model gives every
observation a bias term with an L1 penalty, so only outliers get a nonzero
bias. The random bias model gives every observation its own noise variance
under an inverse-gamma penalty, so outliers get inflated variances. A plain
GP serves as the baseline.
"""
__version__ = "0.1.0"

from .cob import CobFit, ConvergenceWarning, fit_cob, solve_delta_subproblem
from .config import FitConfig, ModelKind
from .gp import Dataset, FactorizationError, PredictiveDist, gauss_nll, predict
from .kernels import KernelFamily, KernelSpec, kernel_eval, kernel_matrix
from .models import fit_model, predict_observed
from .plain import PlainFit, fit_plain
from .rab import RabFit, fit_rab
from .simulation import ScenarioSpec, generate_scenario, mse, nlpd, toy_outlier_dataset
from .experiment import ExperimentGrid, ExperimentReport, run_experiment, write_report

__all__ = [
    "CobFit",
    "ConvergenceWarning",
    "Dataset",
    "ExperimentGrid",
    "ExperimentReport",
    "FactorizationError",
    "FitConfig",
    "KernelFamily",
    "KernelSpec",
    "ModelKind",
    "PlainFit",
    "PredictiveDist",
    "RabFit",
    "ScenarioSpec",
    "fit_cob",
    "fit_model",
    "fit_plain",
    "fit_rab",
    "gauss_nll",
    "generate_scenario",
    "kernel_eval",
    "kernel_matrix",
    "mse",
    "nlpd",
    "predict",
    "predict_observed",
    "run_experiment",
    "solve_delta_subproblem",
    "toy_outlier_dataset",
    "write_report",
]
