from .trees import (
    FitConfig,
    Leaf,
    MomentForest,
    MomentTree,
    ProbForest,
    ProbTree,
    Split,
    TimeModel,
    Tree,
    fit_moment_forest,
    fit_moment_tree,
    fit_prob_classifier,
    fit_time_model,
    grow_tree,
    model_feature_importance,
    predict_moments,
    predict_proba,
    rf_kernel,
    rf_kernel_matrix,
)
from .linear import LinearL1, fit_lasso_moments, fit_logistic_l1
from .io import dumps, loads, load_model, model_from_dict, model_to_dict, save_model


def linear_weights(m):
    """Absolute linear weights, the importance surrogate for lasso models."""
    if not isinstance(m, LinearL1):
        from ..errors import WrongModelKind
        raise WrongModelKind(f"{m.kind} is not linear")
    return m.abs_weights()
