"""Capture-recapture subsampling with empirical likelihood weighting for M-estimation."""

from .capture import SamplingPlan, capture_recapture
from .dataset import DataMatrix, compute_aux, load_csv, standardize
from .design import build_plan, pilot_fit
from .elw import elw_weights, solve_lambda
from .estimators import estimate, variance_estimates
from .models import ModelFamily, parse_family
from .sizing import chi2_quantile, size_m1, size_m2
from .solver import fit

__version__ = "0.1.0"

__all__ = [
    "SamplingPlan", "capture_recapture", "DataMatrix", "compute_aux", "load_csv", "standardize",
    "build_plan", "pilot_fit", "elw_weights", "solve_lambda", "estimate", "variance_estimates",
    "ModelFamily", "parse_family", "chi2_quantile", "size_m1", "size_m2", "fit",
]
