"""Single-hidden-layer perceptron with logistic units."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

from ..rng import as_generator
from ..table import TrainingTable
from .cv import fold_assignment

INIT_RANGE = 0.5
MAX_EPOCHS = 500
GRAD_TOL = 1e-6
GD_STEP = 0.1
MAX_RETRIES = 10


@dataclass(frozen=True)
class MLPWeights:
    W1: np.ndarray  # [p, size]
    b1: np.ndarray  # [size]
    w2: np.ndarray  # [size]
    b2: float
    loss: float = np.nan
    n_iter: int = 0
    converged: bool = False

    @property
    def width(self) -> int:
        return self.W1.shape[0]

    @property
    def size(self) -> int:
        return self.W1.shape[1]

    def score(self, features) -> np.ndarray:
        features = np.asarray(features, dtype=float)
        if features.shape[-1] != self.width:
            raise ValueError(f"expected {self.width} features, got {features.shape[-1]}")
        hidden = special.expit(features @ self.W1 + self.b1)
        return special.expit(hidden @ self.w2 + self.b2)

    def flat(self) -> np.ndarray:
        return pack(self.W1, self.b1, self.w2, self.b2)


def n_params(width: int, size: int) -> int:
    return width * size + 2 * size + 1


def pack(W1, b1, w2, b2) -> np.ndarray:
    return np.concatenate([np.ravel(W1), np.ravel(b1), np.ravel(w2), np.atleast_1d(b2)])


def unpack(theta: np.ndarray, width: int, size: int):
    i = width * size
    W1 = theta[:i].reshape(width, size)
    b1 = theta[i:i + size]
    w2 = theta[i + size:i + 2 * size]
    return W1, b1, w2, float(theta[-1])


def loss_and_grad(theta, X, y, size: int, decay: float = 0.0):
    """Summed cross-entropy plus ``decay * |theta|^2`` and its gradient."""
    W1, b1, w2, b2 = unpack(theta, X.shape[1], size)
    hidden = special.expit(X @ W1 + b1)
    out = hidden @ w2 + b2
    loss = np.sum(np.logaddexp(0.0, out) - y * out) + decay * theta @ theta
    d_out = special.expit(out) - y
    d_hidden = np.outer(d_out, w2) * hidden * (1.0 - hidden)
    grad = pack(X.T @ d_hidden, d_hidden.sum(axis=0), hidden.T @ d_out, d_out.sum())
    return float(loss), grad + 2.0 * decay * theta


def _train_lbfgs(theta0, X, y, size, decay, max_iter):
    res = optimize.minimize(loss_and_grad, theta0, args=(X, y, size, decay), jac=True,
                            method="L-BFGS-B",
                            options={"maxiter": max_iter, "gtol": GRAD_TOL})
    grad_norm = np.linalg.norm(res.jac) if res.jac is not None else np.inf
    return res.x, float(res.fun), int(res.nit), bool(grad_norm < GRAD_TOL or res.success)


def _train_gd(theta0, X, y, size, decay, max_iter, step):
    theta = theta0.copy()
    n = X.shape[0]
    loss = np.nan
    for epoch in range(1, max_iter + 1):
        loss, grad = loss_and_grad(theta, X, y, size, decay)
        if not np.isfinite(loss):
            raise FloatingPointError("non-finite loss")
        if np.linalg.norm(grad) / n < GRAD_TOL:
            return theta, loss, epoch, True
        theta = theta - step * grad / n
    loss, _ = loss_and_grad(theta, X, y, size, decay)
    if not np.isfinite(loss):
        raise FloatingPointError("non-finite loss")
    return theta, loss, max_iter, False


def fit_mlp(table: TrainingTable, size: int, decay: float = 0.0, rng=None,
            optimizer: str = "lbfgs", max_iter: int = MAX_EPOCHS, n_restarts: int = 1):
    """Train a ``size``-unit network on full-batch cross-entropy.

    ``optimizer="lbfgs"`` (default) minimises with L-BFGS for at most
    ``max_iter`` iterations; ``"gd"`` runs plain gradient descent on the mean
    loss with step 0.1. A non-finite loss halves the step (or, for L-BFGS,
    the initial weight range) and retries, at most 10 times. With
    ``n_restarts > 1`` the lowest-loss of several initialisations is kept.
    """
    from .base import FittedModel

    table.check_fittable()
    if size < 1:
        raise ValueError("size must be a positive integer")
    if decay < 0:
        raise ValueError("decay must be >= 0")
    if optimizer not in ("lbfgs", "gd"):
        raise ValueError(f"unknown optimizer {optimizer!r}")
    gen = as_generator(rng)
    X = table.features
    y = table.labels.astype(float)
    best = None
    for _ in range(max(1, n_restarts)):
        theta0 = gen.uniform(-INIT_RANGE, INIT_RANGE, n_params(X.shape[1], size))
        result = _train(theta0, X, y, size, decay, optimizer, max_iter)
        if best is None or result[1] < best[1]:
            best = result
    theta, loss, nit, conv = best
    W1, b1, w2, b2 = unpack(theta, X.shape[1], size)
    weights = MLPWeights(W1.copy(), b1.copy(), w2.copy(), b2, loss, nit, conv)
    return FittedModel("mlp", weights, {"size": int(size), "decay": float(decay)},
                       {"loss": loss, "iterations": nit, "grad_converged": conv})


def _train(theta0, X, y, size, decay, optimizer, max_iter):
    step = GD_STEP
    for attempt in range(MAX_RETRIES + 1):
        try:
            with np.errstate(over="raise", invalid="raise"):
                if optimizer == "lbfgs":
                    out = _train_lbfgs(theta0 * 0.5**attempt, X, y, size, decay, max_iter)
                else:
                    out = _train_gd(theta0, X, y, size, decay, max_iter, step)
            if np.isfinite(out[1]) and np.all(np.isfinite(out[0])):
                return out
        except FloatingPointError:
            pass
        step /= 2.0
    raise FloatingPointError("MLP training diverged after repeated step halving")


def tune_mlp(table: TrainingTable, sizes=range(1, 11), decays=(0.0,), rng=None,
             n_folds: int = 10, max_iter: int = MAX_EPOCHS):
    """Pick (size, decay) by k-fold CV misclassification; smaller values win ties."""
    from .base import FittedModel

    gen = as_generator(rng)
    folds = fold_assignment(table.n_rows, n_folds, gen)
    init_seed = int(gen.integers(2**63))
    sizes = [int(s) for s in sizes]
    decays = [float(d) for d in decays]
    errors = np.zeros((len(sizes), len(decays)))
    fold_ids = np.unique(folds)
    for si, size in enumerate(sizes):
        for di, decay in enumerate(decays):
            wrong = 0
            for f in fold_ids:
                held = folds == f
                train = table.subset(~held)
                if train.labels.min() == train.labels.max():
                    wrong += int(np.sum(table.labels[held] != train.labels[0]))
                    continue
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    model = fit_mlp(train, size, decay,
                                    np.random.default_rng([init_seed, size, di, int(f)]),
                                    max_iter=max_iter)
                pred = model.score(table.features[held]) >= 0.5
                wrong += int(np.sum(pred != table.labels[held]))
            errors[si, di] = wrong / table.n_rows
    # argmin over the flattened (size, decay) grid returns the first minimum,
    # i.e. the smallest size, then the smallest decay.
    si, di = np.unravel_index(np.argmin(errors), errors.shape)
    size, decay = sizes[si], decays[di]
    final = fit_mlp(table, size, decay,
                    np.random.default_rng([init_seed, size, int(di), len(fold_ids)]),
                    max_iter=max_iter)
    report = {"size": size, "decay": decay, "cv_error": float(errors[si, di]),
              "sizes": sizes, "decays": decays}
    return FittedModel("mlp", final.payload, {"size": size, "decay": decay}, report)
