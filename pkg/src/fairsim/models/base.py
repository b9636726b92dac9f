from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..rng import as_generator

KINDS = ("logistic", "logistic_aic", "knn", "mlp", "svm_linear")


@dataclass(frozen=True)
class FittedModel:
    """A trained classifier whose ``score`` ranks candidates (higher is better)."""

    kind: str
    payload: Any
    hyperparams: dict = field(default_factory=dict)
    tuning_report: dict = field(default_factory=dict)
    converged: bool = True

    @property
    def width(self) -> int:
        return self.payload.width

    def score(self, features) -> np.ndarray:
        return self.payload.score(features)

    @property
    def hyperparam(self):
        """The single tuned value reported in result files, if any."""
        for key in ("L", "size"):
            if key in self.hyperparams:
                return self.hyperparams[key]
        return None


@dataclass(frozen=True)
class ConstantModel:
    """Scores every candidate equally; rankings become uniformly random."""

    width: int
    value: float = 0.5

    def score(self, features) -> np.ndarray:
        features = np.asarray(features, dtype=float)
        if features.shape[-1] != self.width:
            raise ValueError(f"expected {self.width} features, got {features.shape[-1]}")
        return np.full(features.shape[:-1], self.value)


def rank_candidates(model, method_features, rng=None) -> np.ndarray:
    """Ranks (1 = highest score) along the candidate axis.

    ``method_features`` is ``[N_d, p]`` or ``[m, N_d, p]``. Equal scores are
    ordered uniformly at random from ``rng``.
    """
    feats = np.asarray(method_features, dtype=float)
    if feats.shape[-1] != model.width:
        raise ValueError(f"expected {model.width} features, got {feats.shape[-1]}")
    scores = np.asarray(model.score(feats), dtype=float)
    return rank_scores(scores, rng)


def rank_scores(scores, rng=None) -> np.ndarray:
    scores = np.asarray(scores, dtype=float)
    keys = as_generator(rng).random(scores.shape)
    order = np.lexsort((keys, -scores), axis=-1)
    ranks = np.empty_like(order)
    np.put_along_axis(ranks, order,
                      np.broadcast_to(np.arange(1, scores.shape[-1] + 1), order.shape), axis=-1)
    return ranks
