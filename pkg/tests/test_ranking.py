import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from fairsim.models import ConstantModel, FittedModel, rank_candidates, rank_scores
from fairsim.models.logistic import LogisticFit


def test_strictly_decreasing_scores():
    assert rank_scores([0.9, 0.5, 0.1]).tolist() == [1, 2, 3]
    assert rank_scores([0.1, 0.9, 0.5]).tolist() == [3, 1, 2]


def test_equal_scores_uniform():
    g = np.random.default_rng(0)
    ranks = rank_scores(np.zeros((10_000, 5)), g)
    freq = np.bincount(np.argmax(ranks == 1, axis=1), minlength=5) / 10_000
    assert np.all(np.abs(freq - 0.2) < 0.02)


def test_batched_ranks_are_permutations():
    r = rank_scores(np.random.default_rng(1).random((7, 5)))
    assert np.all(np.sort(r, axis=1) == np.arange(1, 6))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=8, unique=True),
       st.floats(0.1, 5), st.floats(-3, 3), st.integers(0, 2**31))
def test_invariant_under_increasing_transform(scores, a, b, seed):
    scores = np.array(scores)
    transformed = np.exp(a * scores) + b
    order = np.argsort(scores)
    assume(np.all(np.diff(transformed[order]) > 0))  # still strictly increasing in floats
    assert np.array_equal(rank_scores(scores, seed), rank_scores(transformed, seed))


def test_logistic_ranking_matches_linear_predictor():
    fit = LogisticFit(np.array([0.1, 1.0, -2.0]), np.ones(3), np.ones(3), True, 0.0)
    model = FittedModel("logistic", fit)
    feats = np.random.default_rng(2).standard_normal((3, 5, 2))
    eta = 0.1 + feats @ np.array([1.0, -2.0])
    assert np.array_equal(rank_candidates(model, feats, 0), rank_scores(eta, 0))


def test_width_mismatch():
    with pytest.raises(ValueError):
        rank_candidates(ConstantModel(3), np.zeros((5, 2)))


def test_constant_model_is_random():
    ranks = rank_candidates(ConstantModel(2), np.zeros((5000, 5, 2)), np.random.default_rng(3))
    top = np.argmax(ranks == 1, axis=1)
    assert np.mean(top == 0) == pytest.approx(0.2, abs=0.02)
