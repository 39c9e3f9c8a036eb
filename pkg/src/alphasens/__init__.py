"""Metric sensitivity analysis: alpha-curves of derivative power means."""

from .classic_metrics import SensitivitySummary, classic_summaries, classic_summary, classify_variable
from .core import Dataset, JacobianTensor, NormPair, StandardizationParams, preprocess, read_csv, read_jacobian
from .errors import AlphaSensError, NumericalError, ValidationError
from .metric_sensitivity import (AlphaCurve, AlphaGrid, all_alpha_curves, alpha_curve, alpha_mean_sensitivity,
                                 generalized_mean, sensitivity_pq)

__version__ = "0.1.0"

__all__ = [
    "AlphaCurve", "AlphaGrid", "AlphaSensError", "Dataset", "JacobianTensor", "NormPair", "NumericalError",
    "SensitivitySummary", "StandardizationParams", "ValidationError", "all_alpha_curves", "alpha_curve",
    "alpha_mean_sensitivity", "classic_summaries", "classic_summary", "classify_variable", "generalized_mean",
    "preprocess", "read_csv", "read_jacobian", "sensitivity_pq",
]
