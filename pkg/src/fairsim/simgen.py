"""Synthetic recruitment methods under discrimination and self-censorship.

Layout of every feature tensor is ``[method, candidate, feature]`` (method
major, feature innermost), and the pooled training rows are emitted in that
same order: row ``i * n_candidates + j`` is candidate ``j`` of method ``i``.

Seed-to-tensor mapping (frozen, golden tests depend on it): for a base stream
tagged ``tag`` the blocks are drawn from ``rng.stream(seed, tag, block)`` with

* ``X``   -- ``standard_normal(shape)``
* ``Y``   -- binary scenarios ``random(shape) < 0.5``; continuous ``standard_normal``
* ``aux`` -- binary scenarios ``random(shape) < 0.5`` (B); continuous ``standard_normal`` (eps)
* ``mix`` -- binary scenarios ``random(shape) < alpha`` (U); absent otherwise

and the censored-block tie keys from ``rng.stream(seed, TIES, tag).random``.

Ties in the censored block (equal mean ``Y``, binary scenarios only) follow
``ScenarioConfig.censored_ties``: ``"objective"`` orders them by descending
mean ``X`` and falls back to the tie keys, ``"random"`` uses the tie keys
alone.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import rng as rngmod
from .table import TrainingTable, block_names


class Scenario(str, enum.Enum):
    SELF_CENSORSHIP = "self_censorship"
    THRESHOLD_BINARY = "threshold_binary"
    THRESHOLD_CONTINUOUS = "threshold_continuous"

    @property
    def binary(self) -> bool:
        return self is not Scenario.THRESHOLD_CONTINUOUS

    @property
    def threshold(self) -> bool:
        return self is not Scenario.SELF_CENSORSHIP


VIEWS = ("full", "anon")
TIE_POLICIES = ("objective", "random")
LABEL_SOURCES = ("perfect", "biased")


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: Scenario
    alpha: float
    bias_param: float
    n_train: int = 5000
    n_test: int = 500
    n_candidates: int = 5
    n_features: int = 5
    master_seed: int = 0
    censored_ties: str = "objective"

    def __post_init__(self):
        object.__setattr__(self, "scenario", Scenario(self.scenario))
        if self.censored_ties not in TIE_POLICIES:
            raise ValueError(f"censored_ties must be one of {TIE_POLICIES}")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"alpha must be in [0, 1), got {self.alpha}")
        if self.scenario is Scenario.SELF_CENSORSHIP and not self.bias_param > 0:
            raise ValueError("self-censorship needs a depreciation mu > 0")
        if not np.isfinite(self.bias_param):
            raise ValueError("bias_param must be finite")
        for name in ("n_train", "n_test", "n_features"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.n_candidates < 2:
            raise ValueError("a ranking needs at least two candidates")
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError("master_seed must be an unsigned 64-bit integer")


@dataclass(frozen=True)
class BaseRandomness:
    """Intrinsic draws shared by every bias level of one replicate."""

    X: np.ndarray
    Y: np.ndarray
    aux: np.ndarray
    mix: np.ndarray | None
    tie_keys: np.ndarray

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.X.shape


@dataclass(frozen=True)
class RecruitmentMethod:
    X: np.ndarray
    Y: np.ndarray
    Z: np.ndarray
    X_tilde: np.ndarray | None
    rank_perfect: np.ndarray
    rank_biased: np.ndarray
    success_perfect: np.ndarray
    success_biased: np.ndarray


@dataclass(frozen=True)
class RecruitmentMethods:
    """A batch of methods; arrays are ``[method, candidate(, feature)]``."""

    X: np.ndarray
    Y: np.ndarray
    Z: np.ndarray
    X_tilde: np.ndarray | None
    rank_perfect: np.ndarray
    rank_biased: np.ndarray

    def __len__(self) -> int:
        return self.X.shape[0]

    def __getitem__(self, i: int) -> RecruitmentMethod:
        return RecruitmentMethod(
            self.X[i], self.Y[i], self.Z[i],
            None if self.X_tilde is None else self.X_tilde[i],
            self.rank_perfect[i], self.rank_biased[i],
            self.success_perfect[i], self.success_biased[i],
        )

    @property
    def success_perfect(self) -> np.ndarray:
        return (self.rank_perfect == 1).astype(np.int8)

    @property
    def success_biased(self) -> np.ndarray:
        return (self.rank_biased == 1).astype(np.int8)

    def features(self, view: str, biased: bool = False) -> np.ndarray:
        """Feature tensor ``[method, candidate, 3K or 2K]`` for a view.

        ``biased`` swaps in the depreciated objective block when one exists.
        """
        x = self.X_tilde if biased and self.X_tilde is not None else self.X
        if view == "full":
            return np.concatenate([x, self.Y, self.Z], axis=-1)
        if view == "anon":
            return np.concatenate([x, self.Z], axis=-1)
        raise ValueError(f"unknown view {view!r}")


@dataclass(frozen=True)
class DatasetBundle:
    config: ScenarioConfig
    train: RecruitmentMethods
    test: RecruitmentMethods

    def table(self, view: str = "full", labels: str = "biased") -> TrainingTable:
        if labels not in LABEL_SOURCES:
            raise ValueError(f"unknown label source {labels!r}")
        biased = labels == "biased"
        feats = self.train.features(view, biased=biased)
        n, nd, p = feats.shape
        ranks = self.train.rank_biased if biased else self.train.rank_perfect
        k = self.config.n_features
        names = block_names(k, "xyz" if view == "full" else "xz")
        return TrainingTable(
            feats.reshape(n * nd, p),
            (ranks == 1).astype(np.int8).reshape(-1),
            names,
            np.repeat(np.arange(n), nd),
            np.tile(np.arange(nd), n),
        )

    @property
    def train_full(self) -> TrainingTable:
        return self.table("full", "biased")

    @property
    def train_anon(self) -> TrainingTable:
        return self.table("anon", "biased")

    def test_features(self, view: str) -> np.ndarray:
        # Test files always carry the unbiased objective block.
        return self.test.features(view, biased=False)


def gen_base(config: ScenarioConfig, method_count: int, stream_tag: int) -> BaseRandomness:
    shape = (int(method_count), config.n_candidates, config.n_features)
    seed = config.master_seed
    X = rngmod.stream(seed, stream_tag, rngmod.BLOCK_X).standard_normal(shape)
    y_rng = rngmod.stream(seed, stream_tag, rngmod.BLOCK_Y)
    aux_rng = rngmod.stream(seed, stream_tag, rngmod.BLOCK_AUX)
    mix = None
    if config.scenario.binary:
        Y = (y_rng.random(shape) < 0.5).astype(np.int8)
        aux = (aux_rng.random(shape) < 0.5).astype(np.int8)
        mix_rng = rngmod.stream(seed, stream_tag, rngmod.BLOCK_MIX)
        mix = (mix_rng.random(shape) < config.alpha).astype(np.int8)
    else:
        Y = y_rng.standard_normal(shape)
        aux = aux_rng.standard_normal(shape)
    tie_keys = rngmod.stream(seed, rngmod.TIES, stream_tag).random(shape[:2])
    return BaseRandomness(X, Y, aux, mix, tie_keys)


def derive_z_binary(Y, B, U):
    """Proxy copying ``Y`` when ``U`` is 1 and the independent coin ``B`` otherwise."""
    Y, B, U = np.asarray(Y), np.asarray(B), np.asarray(U)
    return U * Y + (1 - U) * B


def derive_z_continuous(Y, eps, alpha: float):
    if not alpha < 1.0:
        raise ValueError("alpha must be < 1 for the continuous proxy")
    return alpha / np.sqrt(1.0 - alpha**2) * np.asarray(Y) + np.asarray(eps)


def self_censored_features(X, Y, mu: float):
    return np.asarray(X) - mu * (1 - np.asarray(Y))


def perfect_ranking(xbar) -> np.ndarray:
    """Ranks (1 = best) by descending value along the last axis.

    Exact ties go to the lowest candidate index.
    """
    xbar = np.asarray(xbar, dtype=float)
    if xbar.size == 0 or xbar.shape[-1] == 0:
        raise ValueError("cannot rank an empty set of candidates")
    order = np.argsort(-xbar, axis=-1, kind="stable")
    return _ranks_from_order(order)


def censored_ranking(xbar, ybar, S: float, tie_keys=None, rng=None,
                     ties: str = "random") -> np.ndarray:
    """Ranking where profiles with mean ``Y <= S`` are demoted.

    Retained profiles come first by descending ``xbar``; the censored block
    follows by descending ``ybar``. Equal ``ybar`` inside the censored block is
    ordered by ``tie_keys`` (uniform draws), which gives a uniformly random
    order; if none are supplied they are drawn from ``rng``. With
    ``ties="objective"`` such ties are first ordered by descending ``xbar``.
    """
    if ties not in TIE_POLICIES:
        raise ValueError(f"ties must be one of {TIE_POLICIES}")
    xbar = np.asarray(xbar, dtype=float)
    ybar = np.asarray(ybar, dtype=float)
    if xbar.shape != ybar.shape:
        raise ValueError("xbar and ybar must have the same shape")
    if tie_keys is None:
        tie_keys = rngmod.as_generator(rng).random(xbar.shape)
    censored = ybar <= S
    secondary = np.where(censored, -ybar, -xbar)
    keys = np.where(censored, np.asarray(tie_keys, dtype=float), 0.0)
    by_x = np.where(censored, -xbar, 0.0) if ties == "objective" else np.zeros_like(xbar)
    index = np.broadcast_to(np.arange(xbar.shape[-1]), xbar.shape)
    order = np.lexsort((index, keys, by_x, secondary, censored), axis=-1)
    return _ranks_from_order(order)


def _ranks_from_order(order: np.ndarray) -> np.ndarray:
    ranks = np.empty_like(order)
    positions = np.broadcast_to(np.arange(1, order.shape[-1] + 1), order.shape)
    np.put_along_axis(ranks, order, positions, axis=-1)
    return ranks


def threshold_grid(n: int):
    """Canonical thresholds for means of ``n`` binary or Gaussian variables.

    Returns ``(binary_thresholds, continuous_thresholds, rejection_probs)``:
    binary ``k/n`` for ``k = 0..n-1``; continuous quantiles of ``N(0, 1/n)`` at
    ``P(C <= k)`` with ``C ~ Binomial(n, 1/2)``, so both rules reject a profile
    with the same probability.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    k = np.arange(n)
    probs = stats.binom.cdf(k, n, 0.5)
    binary = k / n
    continuous = stats.norm.ppf(probs, scale=np.sqrt(1.0 / n))
    return binary, continuous, probs


def bias_levels(scenario: Scenario, n_features: int = 5,
                mu_levels=(0.4, 0.8, 1.2, 1.6, 2.0)):
    """(bias parameters, rejection probabilities or None) for a scenario."""
    scenario = Scenario(scenario)
    if scenario is Scenario.SELF_CENSORSHIP:
        return np.asarray(mu_levels, dtype=float), None
    binary, continuous, probs = threshold_grid(n_features)
    return (binary if scenario.binary else continuous), probs


def _methods(config: ScenarioConfig, base: BaseRandomness, biased: bool) -> RecruitmentMethods:
    if config.scenario.binary:
        Z = derive_z_binary(base.Y, base.aux, base.mix).astype(float)
    else:
        Z = derive_z_continuous(base.Y, base.aux, config.alpha)
    Y = base.Y.astype(float)
    rank_perfect = perfect_ranking(base.X.mean(axis=-1))
    X_tilde = None
    if not biased:
        rank_biased = rank_perfect
    elif config.scenario.threshold:
        rank_biased = censored_ranking(base.X.mean(axis=-1), Y.mean(axis=-1),
                                       config.bias_param, tie_keys=base.tie_keys,
                                       ties=config.censored_ties)
    else:
        X_tilde = self_censored_features(base.X, Y, config.bias_param)
        rank_biased = perfect_ranking(X_tilde.mean(axis=-1))
    return RecruitmentMethods(base.X, Y, Z, X_tilde, rank_perfect, rank_biased)


def assemble_dataset(config: ScenarioConfig, base: BaseRandomness,
                     test_base: BaseRandomness | None = None) -> DatasetBundle:
    """Apply the configured bias to shared base draws.

    ``base`` is the training stream; the test stream is drawn from the config
    when not supplied. Test methods keep only unbiased features and the
    perfect ranking is the scoring target.
    """
    expected = (config.n_train, config.n_candidates, config.n_features)
    if base.shape != expected:
        raise ValueError(f"base shape {base.shape} does not match config {expected}")
    if test_base is None:
        test_base = gen_base(config, config.n_test, rngmod.TEST)
    if test_base.shape[1:] != expected[1:]:
        raise ValueError("test base shape does not match config")
    train = _methods(config, base, biased=True)
    test = _methods(config, test_base, biased=False)
    return DatasetBundle(config, train, test)


def simulate(config: ScenarioConfig) -> DatasetBundle:
    base = gen_base(config, config.n_train, rngmod.TRAIN)
    return assemble_dataset(config, base)
