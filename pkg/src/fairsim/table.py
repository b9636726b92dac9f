from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def block_names(k: int, blocks: str = "xyz") -> tuple[str, ...]:
    return tuple(f"{b}{i}" for b in blocks for i in range(1, k + 1))


@dataclass(frozen=True)
class TrainingTable:
    """Pooled candidate rows with a binary success label.

    Column names start with the block letter (``x``, ``y`` or ``z``), which is
    how coefficient diagnostics are tagged downstream.
    """

    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...]
    method_ids: np.ndarray | None = None
    candidate_ids: np.ndarray | None = None

    def __post_init__(self):
        features = np.asarray(self.features, dtype=float)
        labels = np.asarray(self.labels)
        if features.ndim != 2:
            raise ValueError("features must be a 2-D array")
        if labels.shape != (features.shape[0],):
            raise ValueError("labels must have one entry per row")
        if len(self.feature_names) != features.shape[1]:
            raise ValueError("feature_names does not match feature width")
        if labels.size and not np.isin(labels, (0, 1)).all():
            raise ValueError("labels must be in {0, 1}")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels.astype(np.int8))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def width(self) -> int:
        return self.features.shape[1]

    @property
    def blocks(self) -> tuple[str, ...]:
        return tuple(name[0] for name in self.feature_names)

    def check_fittable(self) -> None:
        if self.n_rows < 2:
            raise ValueError("need at least two rows to fit")
        n_pos = int(self.labels.sum())
        if n_pos == 0 or n_pos == self.n_rows:
            raise ValueError("degenerate labels: both classes must be present")

    def subset(self, rows) -> "TrainingTable":
        return TrainingTable(
            self.features[rows],
            self.labels[rows],
            self.feature_names,
            None if self.method_ids is None else self.method_ids[rows],
            None if self.candidate_ids is None else self.candidate_ids[rows],
        )

    def select_columns(self, mask) -> "TrainingTable":
        mask = np.asarray(mask, dtype=bool)
        names = tuple(n for n, keep in zip(self.feature_names, mask) if keep)
        return TrainingTable(self.features[:, mask], self.labels, names,
                             self.method_ids, self.candidate_ids)
