import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from koopman_lab.errors import InvalidExponent, NonPositiveWeight, WeightsDoNotSumToOne
from koopman_lab.measure_space import (
    generated_partition,
    indicator,
    integral,
    lp_norm,
    new_space,
    pointwise_product,
    support,
    uniform_space,
)


def test_new_space_examples():
    s = new_space([0.5, 0.25, 0.25])
    assert s.n == 3
    assert s.measure([1, 2]) == pytest.approx(0.5)
    with pytest.raises(WeightsDoNotSumToOne):
        new_space([0.5, 0.6])
    u = new_space([0.25] * 4)
    assert u == uniform_space(4)


def test_rejects_bad_weights():
    with pytest.raises(NonPositiveWeight):
        new_space([1.0, 0.0])
    with pytest.raises(NonPositiveWeight):
        new_space([1.5, -0.5])
    with pytest.raises(ValueError):
        new_space([])


def test_weight_tolerance_is_tight():
    new_space([0.5, 0.5 + 5e-13])
    with pytest.raises(WeightsDoNotSumToOne):
        new_space([0.5, 0.5 + 1e-10])


def test_labels():
    s = new_space([0.5, 0.5], ["a", "b"])
    assert tuple(s.atom_labels) == ("a", "b")
    with pytest.raises(ValueError):
        new_space([0.5, 0.5], ["a"])


def test_integral_examples():
    half = new_space([0.5, 0.5])
    assert integral(half, [2, 0]) == pytest.approx(1)
    s = new_space([0.5, 0.25, 0.25])
    assert integral(s, np.ones(3)) == pytest.approx(1)
    assert integral(s, [1, -1, 0]) == pytest.approx(0.25)


def test_lp_norm_examples():
    u = uniform_space(2)
    assert lp_norm(u, [1, -1], 1) == pytest.approx(1)
    assert lp_norm(u, [1, -1], math.inf) == pytest.approx(1)
    assert lp_norm(u, [3, 0], 2) == pytest.approx(3 / math.sqrt(2))
    with pytest.raises(InvalidExponent):
        lp_norm(u, [1, 0], 0.5)


def test_pointwise_product_examples():
    f = np.array([1.0, 2.0])
    assert np.array_equal(pointwise_product(np.ones(2), f), f)
    assert np.array_equal(pointwise_product([1, 2], [3, -1]), [3, -2])
    s = uniform_space(4)
    prod = pointwise_product(indicator(s, [0, 1, 2]), indicator(s, [1, 2, 3]))
    assert np.array_equal(prod, indicator(s, [1, 2]))


def test_indicator_examples():
    s = uniform_space(3)
    assert np.array_equal(indicator(s, range(3)), np.ones(3))
    assert np.array_equal(indicator(s, []), np.zeros(3))
    assert np.array_equal(indicator(s, [0]), [1, 0, 0])
    assert np.array_equal(indicator(s, np.array([True, False, True])), [1, 0, 1])
    with pytest.raises(ValueError):
        indicator(s, [3])


def test_support():
    assert support([0, 1e-12, 2], tol=1e-9) == frozenset({2})
    assert support([0, 1e-12, 2]) == frozenset({1, 2})


def test_generated_partition_examples():
    s = uniform_space(3)
    assert generated_partition(s, [np.ones(3)]) == [(0, 1, 2)]
    assert generated_partition(s, [indicator(s, [0])]) == [(0,), (1, 2)]
    assert generated_partition(s, [indicator(s, [0]), indicator(s, [1])]) == [(0,), (1,), (2,)]


def test_all_sets_enumerates_power_set():
    s = uniform_space(3)
    sets = list(s.all_sets())
    assert len(sets) == 8 and len(set(sets)) == 8


@given(st.lists(st.floats(0.05, 1.0), min_size=1, max_size=7), st.data())
def test_integral_of_indicator_is_measure(raw, data):
    w = np.array(raw) / sum(raw)
    s = new_space(w)
    M = data.draw(st.sets(st.integers(0, s.n - 1)))
    assert integral(s, indicator(s, M)).real == pytest.approx(s.measure(M), abs=1e-14)


@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_lp_norm_monotone_in_p(n, seed):
    rng = np.random.default_rng(seed)
    s = new_space(rng.dirichlet(np.ones(n)) * 0.98 + 0.02 / n)
    f = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    p1, p2, pinf = (lp_norm(s, f, p) for p in (1, 2, math.inf))
    assert p1 <= p2 * (1 + 1e-12)
    assert p2 <= pinf * (1 + 1e-12)


@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_partition_invariant_under_products(n, seed):
    rng = np.random.default_rng(seed)
    s = uniform_space(n)
    fs = [rng.integers(0, 3, size=n).astype(float) for _ in range(rng.integers(1, 4))]
    products = [a * b for a in fs for b in fs]
    assert generated_partition(s, fs + products) == generated_partition(s, fs)
