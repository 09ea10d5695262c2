"""Explain concept drift by modelling the time a sample was observed."""
from .core import Dataset, StandardizationParams, TimeEmbedding, embed_time, load_csv, write_csv
from .errors import DriftLensError
from .localization import LocusReport, calibrate_threshold, kl_bernoulli, localize
from .models import FitConfig, fit_prob_classifier, fit_time_model
from .segmentation import Segmentation, segment
from .prototypes import DriftMetricConfig, PrototypeSet, build_prototypes, pairwise_drift_distance
from .explainers import (ExplainPlan, ExplanationBundle, IpfiState, explain_drift,
                         local_surrogate, nearest_counterfactual, permutation_importance)

__version__ = "0.1.0"

__all__ = [
    "Dataset", "StandardizationParams", "TimeEmbedding", "embed_time", "load_csv", "write_csv",
    "DriftLensError", "LocusReport", "calibrate_threshold", "kl_bernoulli", "localize",
    "FitConfig", "fit_prob_classifier", "fit_time_model", "Segmentation", "segment",
    "DriftMetricConfig", "PrototypeSet", "build_prototypes", "pairwise_drift_distance",
    "ExplainPlan", "ExplanationBundle", "IpfiState", "explain_drift", "local_surrogate",
    "nearest_counterfactual", "permutation_importance",
]
