from __future__ import annotations

import numpy as np

from ..rng import as_generator


def fold_assignment(n_rows: int, n_folds: int, rng) -> np.ndarray:
    """Fold index per row, balanced sizes, order drawn from ``rng``.

    With fewer rows than folds this degrades to leave-one-out.
    """
    n_folds = min(n_folds, n_rows)
    if n_folds < 2:
        raise ValueError("cross-validation needs at least two rows")
    perm = as_generator(rng).permutation(n_rows)
    folds = np.empty(n_rows, dtype=np.int64)
    folds[perm] = np.arange(n_rows) % n_folds
    return folds
