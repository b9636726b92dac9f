import numpy as np
from hypothesis import given, strategies as st

from fairsim import rng as R


def test_replicate_seed_frozen():
    assert R.replicate_seed(2024, "threshold_binary", 0.2, 0) == 2799146716337342774


@given(st.integers(0, 2**32), st.sampled_from(["a", "b"]), st.floats(0, 1), st.integers(0, 999))
def test_replicate_seed_deterministic(m, s, a, r):
    assert R.replicate_seed(m, s, a, r) == R.replicate_seed(m, s, a, r)
    assert 0 <= R.replicate_seed(m, s, a, r) < 2**64


def test_no_collisions_over_ten_thousand():
    seeds = {R.replicate_seed(2024, sc, a, r)
             for sc in ("self_censorship", "threshold_binary")
             for a in (0.2, 0.5, 0.8, 0.35, 0.65)
             for r in range(1000)}
    assert len(seeds) == 10_000


def test_seed_depends_on_every_key():
    base = R.replicate_seed(1, "x", 0.2, 0)
    assert len({base, R.replicate_seed(2, "x", 0.2, 0), R.replicate_seed(1, "y", 0.2, 0),
                R.replicate_seed(1, "x", 0.5, 0), R.replicate_seed(1, "x", 0.2, 1)}) == 5


def test_streams_are_addressed():
    a = R.stream(7, R.MODEL, 1, 2).random(5)
    assert np.array_equal(a, R.stream(7, R.MODEL, 1, 2).random(5))
    assert not np.array_equal(a, R.stream(7, R.MODEL, 2, 1).random(5))
    assert not np.array_equal(R.stream(7, R.TRAIN).random(5), R.stream(7, R.TEST).random(5))


def test_as_generator_passthrough():
    g = np.random.default_rng(0)
    assert R.as_generator(g) is g
    assert R.as_generator(3).random() == np.random.default_rng(3).random()
