"""In-repo gradient boosting plus the cross-validated diagnostics built on it."""

from .evaluation import (
    EvalReport,
    FoldFit,
    add_noise,
    correlation_matrix,
    cross_validate,
    fit_folds,
    full_report,
    noise_robustness,
    permutation_importance,
)
from .gbdt import (
    LearnerError,
    LearnerParams,
    Tree,
    TreeEnsembleModel,
    gain_importance,
    predict,
    raw_scores,
    train,
)
from .losses import LogisticLoss, SoftmaxLoss, SquaredLoss
from .metrics import ACCURACY, NRMSE, Metric, accuracy, metric_for, nrmse, nrmse_with_flag

__all__ = [
    "ACCURACY", "NRMSE", "EvalReport", "FoldFit", "LearnerError", "LearnerParams",
    "LogisticLoss", "Metric", "SoftmaxLoss", "SquaredLoss", "Tree", "TreeEnsembleModel",
    "accuracy", "add_noise", "correlation_matrix", "cross_validate", "fit_folds",
    "full_report", "gain_importance", "metric_for", "noise_robustness", "nrmse",
    "nrmse_with_flag", "permutation_importance", "predict", "raw_scores", "train",
]
