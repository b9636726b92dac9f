"""Logistic regression by IRLS, Wald p-values and AIC subset selection."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from ..table import TrainingTable

MAX_ITER = 50
TOL = 1e-8
SEPARATION_BOUND = 30.0


@dataclass(frozen=True)
class LogisticFit:
    """Coefficients are intercept first, then one per feature column."""

    beta: np.ndarray
    std_errors: np.ndarray
    p_values: np.ndarray
    converged: bool
    log_likelihood: float
    terms: tuple[str, ...] = ()
    n_iter: int = 0

    @property
    def width(self) -> int:
        return self.beta.size - 1

    def score(self, features) -> np.ndarray:
        return predict_prob(self, features)


def logistic(t):
    return special.expit(t)


def log_likelihood(beta, design, y) -> float:
    eta = design @ beta
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def log_likelihood_gradient(beta, design, y) -> np.ndarray:
    return design.T @ (y - special.expit(design @ beta))


def _design(features) -> np.ndarray:
    features = np.asarray(features, dtype=float)
    return np.column_stack([np.ones(features.shape[0]), features])


def irls(design: np.ndarray, y: np.ndarray):
    """Newton-Raphson / IRLS on a design that already holds the intercept.

    Returns ``(beta, covariance, converged, n_iter)``. Quasi-separation (some
    coefficient beyond +-30 while the step stops shrinking) ends the loop
    early with ``converged=False`` and the current iterate.
    """
    y = np.asarray(y, dtype=float)
    beta = np.zeros(design.shape[1])
    converged = False
    prev_step = np.inf
    it = 0
    for it in range(1, MAX_ITER + 1):
        p = special.expit(design @ beta)
        w = p * (1.0 - p)
        info = design.T @ (design * w[:, None])
        grad = design.T @ (y - p)
        try:
            delta = np.linalg.solve(info, grad)
        except np.linalg.LinAlgError:
            delta = np.linalg.lstsq(info, grad, rcond=None)[0]
        beta = beta + delta
        step = np.max(np.abs(delta))
        if not np.all(np.isfinite(beta)):
            raise FloatingPointError("IRLS diverged")
        if step < TOL:
            converged = True
            break
        if np.max(np.abs(beta)) > SEPARATION_BOUND and step >= prev_step:
            break
        prev_step = step
    p = special.expit(design @ beta)
    info = design.T @ (design * (p * (1.0 - p))[:, None])
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(info)
        converged = False
    return beta, cov, converged, it


def fit_logistic(table: TrainingTable) -> LogisticFit:
    table.check_fittable()
    design = _design(table.features)
    # identically zero columns carry no information: pin them at 0, SE missing
    live = np.ones(design.shape[1], dtype=bool)
    live[1:] = np.any(table.features != 0, axis=0)
    sub = design[:, live]
    if np.linalg.matrix_rank(sub) < sub.shape[1]:
        raise ValueError("design matrix is rank deficient")
    b, cov, converged, n_iter = irls(sub, table.labels)
    beta = np.zeros(design.shape[1])
    beta[live] = b
    se = np.full(design.shape[1], np.nan)
    se[live] = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    ll = log_likelihood(beta, design, table.labels.astype(float))
    fit = LogisticFit(beta, se, np.empty(0), converged, ll,
                      ("intercept",) + table.feature_names, n_iter)
    return LogisticFit(beta, se, wald_pvalues(fit), converged, ll, fit.terms, n_iter)


def predict_prob(fit: LogisticFit, features) -> np.ndarray:
    features = np.asarray(features, dtype=float)
    if features.shape[-1] != fit.width:
        raise ValueError(f"expected {fit.width} features, got {features.shape[-1]}")
    return special.expit(fit.beta[0] + features @ fit.beta[1:])


def wald_pvalues(fit: LogisticFit) -> np.ndarray:
    """Two-sided normal p-values; NaN where the standard error is zero."""
    se = np.asarray(fit.std_errors, dtype=float)
    beta = np.asarray(fit.beta, dtype=float)
    out = np.full(beta.shape, np.nan)
    ok = se > 0
    out[ok] = 2.0 * stats.norm.sf(np.abs(beta[ok] / se[ok]))
    return out


def aic(log_lik: float, n_params: int) -> float:
    return 2.0 * n_params - 2.0 * log_lik


@dataclass(frozen=True)
class SelectedLogistic:
    """Logistic fit restricted to a subset of the input columns."""

    mask: np.ndarray
    fit: LogisticFit
    aic: float
    path: tuple[tuple[str, str, float], ...] = ()
    feature_names: tuple[str, ...] = ()

    @property
    def width(self) -> int:
        return self.mask.size

    @property
    def terms(self) -> tuple[str, ...]:
        """Names for every candidate term, selected or not."""
        names = self.feature_names or tuple(f"v{i + 1}" for i in range(self.mask.size))
        return ("intercept",) + tuple(names)

    def score(self, features) -> np.ndarray:
        features = np.asarray(features, dtype=float)
        if features.shape[-1] != self.mask.size:
            raise ValueError(f"expected {self.mask.size} features, got {features.shape[-1]}")
        return predict_prob(self.fit, features[..., self.mask])

    def full_coefficients(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Estimates, SEs and p-values on the full column set; dropped terms are 0/NaN."""
        width = self.mask.size + 1
        idx = np.concatenate([[0], 1 + np.flatnonzero(self.mask)])
        est = np.zeros(width)
        se = np.full(width, np.nan)
        pv = np.full(width, np.nan)
        est[idx] = self.fit.beta
        se[idx] = self.fit.std_errors
        pv[idx] = self.fit.p_values
        return est, se, pv


class _MaskFitter:
    """Caches (log-likelihood, converged) per column subset."""

    def __init__(self, table: TrainingTable):
        table.check_fittable()
        self.table = table
        self.design = _design(table.features)
        self.y = table.labels.astype(float)
        self.cache: dict[tuple[bool, ...], float] = {}

    def loglik(self, mask) -> float:
        key = tuple(bool(m) for m in mask)
        if key not in self.cache:
            cols = np.concatenate([[True], np.asarray(key, dtype=bool)])
            design = self.design[:, cols]
            beta, _, _, _ = irls(design, self.y)
            self.cache[key] = log_likelihood(beta, design, self.y)
        return self.cache[key]

    def aic(self, mask) -> float:
        return aic(self.loglik(mask), 1 + int(np.sum(mask)))


def stepwise_aic(table: TrainingTable) -> SelectedLogistic:
    """Bidirectional stepwise search from the full model.

    Each step considers dropping any included column or re-adding any
    excluded one and applies the move with the lowest AIC; the search stops
    when no move strictly improves AIC. The intercept is always kept.
    """
    fitter = _MaskFitter(table)
    p = table.width
    mask = np.ones(p, dtype=bool)
    current = fitter.aic(mask)
    path = []
    visited = {tuple(mask)}
    while True:
        best_move, best_aic = None, current
        for k in range(p):
            cand = mask.copy()
            cand[k] = not cand[k]
            value = fitter.aic(cand)
            if value < best_aic:
                best_move, best_aic = k, value
        if best_move is None:
            break
        mask[best_move] = not mask[best_move]
        if tuple(mask) in visited:  # pragma: no cover - strict decrease forbids cycles
            break
        visited.add(tuple(mask))
        action = "add" if mask[best_move] else "drop"
        path.append((action, table.feature_names[best_move], best_aic))
        current = best_aic
    return _refit(table, mask, tuple(path))


def exhaustive_aic_oracle(table: TrainingTable, max_features: int = 12) -> np.ndarray:
    """Best-AIC column mask by enumerating every subset (intercept kept)."""
    if table.width > max_features:
        raise ValueError(f"exhaustive search limited to {max_features} features")
    fitter = _MaskFitter(table)
    best_mask, best_aic = np.zeros(table.width, dtype=bool), np.inf
    for bits in itertools.product((False, True), repeat=table.width):
        value = fitter.aic(bits)
        if value < best_aic:
            best_mask, best_aic = np.array(bits, dtype=bool), value
    return best_mask


def _refit(table: TrainingTable, mask: np.ndarray, path=()) -> SelectedLogistic:
    fit = fit_logistic(table.select_columns(mask))
    return SelectedLogistic(mask.copy(), fit, aic(fit.log_likelihood, 1 + int(mask.sum())), path,
                            tuple(table.feature_names))
