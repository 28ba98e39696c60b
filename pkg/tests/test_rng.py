import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from qshield.rng import (
    SplitMix64,
    derive,
    normal_array,
    permutation,
    uniform_array,
)


def test_scalar_stream_is_deterministic():
    a = SplitMix64(42)
    b = SplitMix64(42)
    assert [a.u64() for _ in range(10)] == [b.u64() for _ in range(10)]


def test_known_first_output():
    # SplitMix64(0) first output, straight from the update equations.
    gen = SplitMix64(0)
    assert gen.u64() == 0xE220A8397B1DCDAF


def test_bulk_matches_scalar():
    seed = 987654321
    gen = SplitMix64(seed)
    scalar = np.array([gen.uniform() for _ in range(257)])
    bulk = uniform_array(seed, (257,))
    assert np.array_equal(scalar, bulk)


@given(st.integers(min_value=0, max_value=2**64 - 1))
@settings(max_examples=50, deadline=None)
def test_uniform_range(seed):
    vals = uniform_array(seed, (64,))
    assert np.all(vals >= 0.0) and np.all(vals < 1.0)


def test_uniform_array_scaling():
    vals = uniform_array(7, (1000,), 2.0, 5.0)
    assert vals.min() >= 2.0 and vals.max() < 5.0


def test_normal_array_moments():
    vals = normal_array(3, (20000,))
    assert abs(vals.mean()) < 0.03
    assert abs(vals.std() - 1.0) < 0.03


def test_derive_separates_streams():
    assert derive(1, "alpha") != derive(1, "beta")
    assert derive(1, "alpha") != derive(2, "alpha")
    assert derive(1, "alpha") == derive(1, "alpha")


def test_permutation_is_a_permutation():
    perm = permutation(100, 5)
    assert sorted(perm.tolist()) == list(range(100))
    assert not np.array_equal(perm, np.arange(100))


def test_permutation_depends_on_seed():
    assert not np.array_equal(permutation(50, 1), permutation(50, 2))
    assert np.array_equal(permutation(50, 9), permutation(50, 9))


@given(st.integers(min_value=1, max_value=1000))
@settings(max_examples=30, deadline=None)
def test_randbelow_bounds(n):
    gen = SplitMix64(n)
    for _ in range(20):
        assert 0 <= gen.randbelow(n) < n
