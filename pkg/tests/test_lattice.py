from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kamgrid.lattice import (
    Lattice,
    canonicalize,
    differences,
    discrete_gradient,
    nearest_lift,
    pair_dot,
    wrap_distance,
)


def test_lattice_basic_geometry():
    lat = Lattice(2, 4)
    assert lat.h == 0.25
    assert lat.n_nodes == 16
    assert lat.flat((1, 2)) == 6
    np.testing.assert_array_equal(lat.unflat(6), [1, 2])
    np.testing.assert_allclose(lat.coords(6), [0.25, 0.5])
    assert lat.neighbor((3, 0), 0, 1) == (0, 0)
    assert lat.neighbor((3, 0), 1, -1) == (3, 3)


@pytest.mark.parametrize("d,N", [(0, 4), (1, 1), (2, 0)])
def test_lattice_rejects_bad_sizes(d, N):
    with pytest.raises(ValueError):
        Lattice(d, N)


def test_neighbor_rejects_bad_axis():
    lat = Lattice(1, 4)
    with pytest.raises(ValueError):
        lat.neighbor((0,), 1, 1)
    with pytest.raises(ValueError):
        lat.neighbor((0,), 0, 2)


def test_shift_tables_match_neighbor():
    lat = Lattice(2, 5)
    for k in range(lat.n_nodes):
        idx = lat.unflat(k)
        for i in range(2):
            assert lat.plus[i, k] == lat.flat(lat.neighbor(idx, i, 1))
            assert lat.minus[i, k] == lat.flat(lat.neighbor(idx, i, -1))


def test_differences_of_linear_function_on_torus():
    lat = Lattice(1, 8)
    phi = np.arange(8.0)
    diffs = differences(lat, phi)
    # interior forward difference is 1/h, the wrap-around one jumps back
    assert diffs[0, 0, 0] == pytest.approx(8.0)
    assert diffs[7, 0, 0] == pytest.approx(-56.0)
    assert diffs[0, 0, 1] == pytest.approx(56.0)
    np.testing.assert_allclose(discrete_gradient(lat, phi, (3,)), diffs[3])


def test_grid_function_shape_check():
    with pytest.raises(ValueError):
        differences(Lattice(1, 4), np.zeros(5))


def test_pair_dot_examples():
    xi = np.array([[2.0, -3.0]])
    assert pair_dot(xi, np.array([1.5])) == pytest.approx(3.0)
    assert pair_dot(xi, np.array([-2.0])) == pytest.approx(-6.0)
    assert pair_dot(xi, np.array([0.0])) == 0.0
    with pytest.raises(ValueError):
        pair_dot(np.zeros((2, 2)), np.zeros(3))


def test_wrap_distance_examples():
    assert wrap_distance([0.1], [0.9]) == pytest.approx(0.2)
    assert wrap_distance([0.0, 0.0], [0.5, 0.5]) == pytest.approx(np.sqrt(0.5))
    assert wrap_distance([0.95, 0.05], [0.05, 0.95]) == pytest.approx(np.hypot(0.1, 0.1))
    with pytest.raises(ValueError):
        wrap_distance([0.1], [0.1, 0.2])


def test_canonicalize_never_returns_one():
    x = canonicalize(np.array([-1e-18, 1.0, 2.25, -0.25]))
    assert np.all((x >= 0) & (x < 1))
    np.testing.assert_allclose(x[1:], [0.0, 0.25, 0.75])


unit = st.floats(0, 1, exclude_max=True, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(st.lists(unit, min_size=2, max_size=2), st.lists(unit, min_size=2, max_size=2))
def test_wrap_distance_matches_brute_force(x, y):
    shifts = np.array([[a, b] for a in range(-2, 3) for b in range(-2, 3)])
    brute = np.min(np.linalg.norm(np.array(x) - np.array(y) + shifts, axis=1))
    assert wrap_distance(x, y) == pytest.approx(brute, abs=1e-12)
    assert wrap_distance(x, y) == pytest.approx(wrap_distance(y, x))


@settings(max_examples=100, deadline=None)
@given(st.lists(unit, min_size=2, max_size=2), st.lists(unit, min_size=2, max_size=2))
def test_nearest_lift_realises_wrap_distance(anchor, x):
    lift = nearest_lift(anchor, x)
    assert np.linalg.norm(lift - np.array(anchor)) == pytest.approx(wrap_distance(anchor, x), abs=1e-12)
    np.testing.assert_allclose(canonicalize(lift), canonicalize(x), atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 12), st.integers(0, 2**31 - 1))
def test_differences_sum_to_zero(N, seed):
    # telescoping: forward differences around the circle sum to zero
    phi = np.random.default_rng(seed).normal(size=N)
    diffs = differences(Lattice(1, N), phi)
    assert diffs[:, 0, 0].sum() == pytest.approx(0.0, abs=1e-9 * N * N)
    np.testing.assert_allclose(diffs[:, 0, 1], -np.roll(diffs[:, 0, 0], 1), atol=1e-9)
