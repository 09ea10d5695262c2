from .importance import (
    ImportanceReport,
    IpfiState,
    impurity_importance,
    ipfi_update,
    permutation_importance,
    score,
)
from .local import Counterfactual, LocalSurrogate, local_surrogate, nearest_counterfactual, time_score
from .pipeline import ExplainPlan, ExplanationBundle, explain_drift
