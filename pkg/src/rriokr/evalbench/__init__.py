"""Metrics, cross-validation and experiment drivers."""

from .cv import CvPlan, CvResult, GridSpec, cross_validate, log_lambda_grid, log_p_grid
from .experiments import (ExperimentReport, StructuredConfig, SyntheticExperimentConfig,
                          run_structured_experiment, run_synthetic_experiment)
from .metrics import (f1_example_based, label_sets, label_threshold_decode, mse_explicit,
                      mse_kernel, mse_output_space, mse_projected, topk_accuracy)

__all__ = [
    "CvPlan", "CvResult", "GridSpec", "cross_validate", "log_lambda_grid", "log_p_grid",
    "ExperimentReport", "StructuredConfig", "SyntheticExperimentConfig",
    "run_structured_experiment", "run_synthetic_experiment",
    "f1_example_based", "label_sets", "label_threshold_decode", "mse_explicit", "mse_kernel",
    "mse_output_space", "mse_projected", "topk_accuracy",
]
