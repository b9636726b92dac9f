import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fairsim.models import knn_score, knn_scores, tune_knn
from fairsim.models.knn import neighbour_order
from fairsim.table import TrainingTable


def table(X, y):
    X = np.asarray(X, float).reshape(len(y), -1)
    return TrainingTable(X, np.asarray(y), tuple(f"x{i}" for i in range(X.shape[1])))


def brute_score(X, y, q, L):
    d = np.sum((X - q) ** 2, axis=1)
    order = np.lexsort((np.arange(len(d)), d))
    return y[order[:L]].mean()


def test_query_equal_to_row_L1():
    t = table([[0.0], [1.0], [5.0]], [1, 0, 1])
    assert knn_score(t, [1.0], 1) == 0.0
    assert knn_score(t, [5.0], 1) == 1.0


def test_L_equal_rows_is_global_mean():
    t = table([[0.0], [1.0], [5.0], [7.0]], [1, 0, 1, 1])
    assert knn_score(t, [100.0], 4) == 0.75


def test_three_row_example():
    t = table([[1.0], [2.0], [3.0]], [1, 0, 1])
    assert knn_score(t, [0.0], 2) == 0.5


def test_L_too_large():
    t = table([[0.0], [1.0]], [0, 1])
    with pytest.raises(ValueError):
        knn_score(t, [0.0], 3)


def test_distance_ties_go_to_lowest_index():
    t = table([[-1.0], [1.0], [1.0]], [0, 1, 0])
    assert knn_score(t, [0.0], 1) == 0.0
    assert neighbour_order(t.features, [[0.0]], 3).tolist() == [[0, 1, 2]]


@pytest.mark.parametrize("grid", [True, False])
def test_brute_force_oracle_1000_queries(grid):
    g = np.random.default_rng(11)
    X = g.standard_normal((300, 3))
    Q = g.standard_normal((1000, 3))
    if grid:  # integer coordinates: distances exact, so ties are genuine
        X, Q = np.round(3 * X), np.round(3 * Q)
    y = g.integers(0, 2, 300).astype(float)
    Ls = [1, 2, 7, 30, 300]
    got = knn_scores(X, y, Q, Ls)
    want = np.array([[brute_score(X, y, q, L) for L in Ls] for q in Q])
    np.testing.assert_array_equal(got, want)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 40))
def test_score_bounds(seed, L):
    g = np.random.default_rng(seed)
    X = g.standard_normal((40, 2))
    y = g.integers(0, 2, 40).astype(float)
    s = knn_scores(X, y, g.standard_normal((20, 2)), [1, L])
    assert np.all((s >= 0) & (s <= 1))
    assert set(np.unique(s[:, 0])) <= {0.0, 1.0}


def test_tune_deterministic_and_separable():
    g = np.random.default_rng(12)
    x = g.standard_normal(200)
    t = table(np.column_stack([x, g.standard_normal(200)]), (x > 0).astype(int))
    a = tune_knn(t, range(1, 31), np.random.default_rng(5))
    b = tune_knn(t, range(1, 31), np.random.default_rng(5))
    assert a.hyperparam == b.hyperparam
    assert a.tuning_report["cv_error"] < 0.1

    pure = table(np.repeat([[0.0], [10.0]], 50, axis=0), [0] * 50 + [1] * 50)
    m = tune_knn(pure, range(1, 11), np.random.default_rng(0))
    assert m.tuning_report["cv_error"] == 0.0 and m.hyperparam == 1


def test_tune_small_table_leave_one_out():
    t = table([[0.0], [0.1], [0.2], [5.0], [5.1], [5.2]], [0, 0, 0, 1, 1, 1])
    m = tune_knn(t, range(1, 4), np.random.default_rng(0))
    assert m.hyperparam == 1


def test_model_score_shape():
    g = np.random.default_rng(13)
    t = table(g.standard_normal((50, 2)), g.integers(0, 2, 50))
    m = tune_knn(t, range(1, 6), np.random.default_rng(1))
    assert m.score(g.standard_normal((3, 5, 2))).shape == (3, 5)
