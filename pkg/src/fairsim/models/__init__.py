from .base import KINDS, ConstantModel, FittedModel, rank_candidates, rank_scores
from .knn import KNNModel, knn_score, knn_scores, tune_knn
from .logistic import (
    LogisticFit,
    SelectedLogistic,
    exhaustive_aic_oracle,
    fit_logistic,
    predict_prob,
    stepwise_aic,
    wald_pvalues,
)
from .mlp import MLPWeights, fit_mlp, tune_mlp
from .svm import SVMSolution, fit_svm, fit_svm_linear, kernel_cv_errors, smo

__all__ = [
    "KINDS", "ConstantModel", "FittedModel", "rank_candidates", "rank_scores",
    "KNNModel", "knn_score", "knn_scores", "tune_knn",
    "LogisticFit", "SelectedLogistic", "exhaustive_aic_oracle", "fit_logistic",
    "predict_prob", "stepwise_aic", "wald_pvalues",
    "MLPWeights", "fit_mlp", "tune_mlp",
    "SVMSolution", "fit_svm", "fit_svm_linear", "kernel_cv_errors", "smo",
]
