"""L-nearest-neighbour scoring with cross-validated L."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..table import TrainingTable
from .cv import fold_assignment

_CHUNK = 256


@dataclass(frozen=True)
class KNNModel:
    features: np.ndarray
    labels: np.ndarray
    L: int
    cv_errors: np.ndarray | None = field(default=None, repr=False)

    @property
    def width(self) -> int:
        return self.features.shape[1]

    def score(self, queries) -> np.ndarray:
        queries = np.asarray(queries, dtype=float)
        if queries.shape[-1] != self.width:
            raise ValueError(f"expected {self.width} features, got {queries.shape[-1]}")
        flat = queries.reshape(-1, self.width)
        scores = knn_scores(self.features, self.labels, flat, [self.L])[:, 0]
        return scores.reshape(queries.shape[:-1])


def neighbour_order(train: np.ndarray, queries: np.ndarray, n_neighbours: int) -> np.ndarray:
    """Indices of the ``n_neighbours`` nearest training rows per query.

    Sorted by Euclidean distance, exact ties resolved by lowest row index.
    Candidates are preselected with the fast ``|a|^2 + |b|^2 - 2ab`` form
    and then re-ranked on exactly computed distances, so rounding in the
    expansion cannot reorder near-ties.
    """
    train = np.asarray(train, dtype=float)
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    n = train.shape[0]
    if not 1 <= n_neighbours <= n:
        raise ValueError(f"need 1 <= L <= {n} training rows, got {n_neighbours}")
    out = np.empty((queries.shape[0], n_neighbours), dtype=np.int64)
    train_sq = np.einsum("ij,ij->i", train, train)
    for start in range(0, queries.shape[0], _CHUNK):
        q = queries[start:start + _CHUNK]
        approx = train_sq[None, :] - 2.0 * q @ train.T
        kth = min(n_neighbours - 1, n - 1)
        part = np.partition(approx, kth, axis=1)[:, kth]
        slack = 1e-9 * (np.abs(part) + np.einsum("ij,ij->i", q, q) + 1.0)
        for r in range(q.shape[0]):
            cand = np.flatnonzero(approx[r] <= part[r] + slack[r])
            diff = train[cand] - q[r]
            exact = np.einsum("ij,ij->i", diff, diff)
            order = np.lexsort((cand, exact))
            out[start + r] = cand[order[:n_neighbours]]
    return out


def knn_scores(train, labels, queries, L_values) -> np.ndarray:
    """Scores for several L at once, shape ``[n_queries, len(L_values)]``."""
    L_values = np.asarray(L_values, dtype=int)
    labels = np.asarray(labels, dtype=float)
    order = neighbour_order(train, queries, int(L_values.max()))
    csum = np.cumsum(labels[order], axis=1)
    return csum[:, L_values - 1] / L_values


def knn_score(train: TrainingTable, query, L: int) -> float:
    if L > train.n_rows:
        raise ValueError(f"L={L} exceeds the {train.n_rows} training rows")
    return float(knn_scores(train.features, train.labels, np.atleast_2d(query), [L])[0, 0])


def cv_errors(table: TrainingTable, L_values, rng, n_folds: int = 10) -> np.ndarray:
    """Misclassification rate (score >= 0.5 predicts 1) per candidate L."""
    L_values = np.asarray(L_values, dtype=int)
    folds = fold_assignment(table.n_rows, n_folds, rng)
    wrong = np.zeros(L_values.size)
    for f in np.unique(folds):
        held = folds == f
        train_x, train_y = table.features[~held], table.labels[~held]
        usable = L_values <= train_x.shape[0]
        scores = knn_scores(train_x, train_y, table.features[held], L_values[usable])
        pred = scores >= 0.5
        miss = (pred != table.labels[held][:, None]).sum(axis=0)
        wrong[usable] += miss
        wrong[~usable] = np.inf
    return wrong / table.n_rows


def tune_knn(table: TrainingTable, L_range=range(1, 71), rng=None, n_folds: int = 10):
    """Choose L by k-fold CV (smaller L wins ties) and keep the full table."""
    from .base import FittedModel

    L_values = np.asarray(list(L_range), dtype=int)
    L_values = L_values[L_values <= table.n_rows]
    errors = cv_errors(table, L_values, rng, n_folds)
    best = int(L_values[np.argmin(errors)])
    model = KNNModel(table.features, table.labels.astype(float), best, errors)
    report = {"L": best, "cv_error": float(errors.min()),
              "L_range": [int(L_values.min()), int(L_values.max())]}
    return FittedModel("knn", model, {"L": best}, report)
