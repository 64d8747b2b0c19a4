import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fibbeam.sphgrid import (
    Direction,
    angular_distance,
    fibonacci_grid,
    nearest_index,
    nearest_indices,
    unit_vector,
    vector_to_angles,
)

import oracles

# frozen from exhaustive enumeration of all 4950 pairs at n_fib = 100
MIN_PAIR_DISTANCE_100 = 0.3102805409152123


def test_single_point_on_equator():
    g = fibonacci_grid(1)
    assert g.points[0].zenith == pytest.approx(math.pi / 2, abs=1e-15)
    assert g.points[0].azimuth == 0.0


def test_two_points():
    g = fibonacci_grid(2)
    assert g.vectors[:, 2] == pytest.approx([0.5, -0.5], abs=1e-15)
    assert g.points[0].azimuth == 0.0
    assert g.points[1].azimuth == pytest.approx(3.8832220774509327, abs=1e-12)


def test_grid_matches_formula_oracle():
    for n in (1, 10, 25, 100):
        assert np.allclose(fibonacci_grid(n).vectors, np.array(oracles.fib_points(n)), atol=1e-14)


def test_min_pair_distance_regression():
    v = fibonacci_grid(100).vectors
    d = np.arccos(np.clip(v @ v.T, -1, 1))
    d[np.diag_indices(100)] = np.inf
    assert d.min() > 0
    assert d.min() == pytest.approx(MIN_PAIR_DISTANCE_100, rel=1e-12)


@pytest.mark.parametrize("n", [1, 10, 25, 100, 1000])
def test_unit_norm(n):
    assert np.allclose(np.linalg.norm(fibonacci_grid(n).vectors, axis=1), 1.0, atol=1e-12)


def test_deterministic():
    a, b = fibonacci_grid(57), fibonacci_grid(57)
    assert np.array_equal(a.vectors, b.vectors)
    assert a.points == b.points


def test_invalid_sizes():
    with pytest.raises(ValueError):
        fibonacci_grid(0)
    with pytest.raises(TypeError):
        fibonacci_grid(2.5)


def test_unit_vector_axes():
    assert np.allclose(unit_vector(Direction(0.0, math.pi / 2)), [1, 0, 0], atol=1e-15)
    assert np.allclose(unit_vector(Direction(math.pi / 2, math.pi / 2)), [0, 1, 0], atol=1e-15)
    assert np.allclose(unit_vector(Direction(0.0, 0.0)), [0, 0, 1], atol=1e-15)


def test_azimuth_normalised():
    assert Direction(-math.pi / 2, 1.0).azimuth == pytest.approx(3 * math.pi / 2)
    assert Direction(5 * math.pi, 1.0).azimuth == pytest.approx(math.pi)
    with pytest.raises(ValueError):
        Direction(0.0, 4.0)


def test_vector_to_angles_rejects_zero():
    with pytest.raises(ValueError):
        vector_to_angles(np.zeros(3))


def test_nearest_index_self_and_hemisphere():
    g = fibonacci_grid(30)
    for k, p in enumerate(g.points):
        assert nearest_index(g, p) == k
    g2 = fibonacci_grid(2)
    assert nearest_index(g2, Direction(0.0, 0.1)) == 0


def test_nearest_index_ties_lowest():
    # equidistant from the two points of the 2-grid? the equator is, for the z-coordinate
    g = fibonacci_grid(2)
    mid = g.vectors[0] + g.vectors[1]
    assert nearest_index(g, mid / np.linalg.norm(mid)) == 0


def test_equal_area_cells():
    rng = np.random.default_rng(11)
    q = rng.standard_normal((1_000_000, 3))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    g = fibonacci_grid(100)
    counts = np.zeros(100)
    for chunk in np.array_split(q, 20):
        counts += np.bincount(nearest_indices(g, chunk), minlength=100)
    frac = counts / len(q)
    assert frac.min() >= 0.5 / 100 and frac.max() <= 2 / 100


@settings(max_examples=100, deadline=None)
@given(st.floats(-10, 10), st.floats(0, math.pi))
def test_direction_round_trip(az, zen):
    d = Direction(az, zen)
    assert 0 <= d.azimuth < 2 * math.pi
    assert np.linalg.norm(unit_vector(d)) == pytest.approx(1.0, abs=1e-12)
    back = Direction.from_vector(unit_vector(d))
    assert angular_distance(back, d) < 1e-7


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 300))
def test_points_distinct(n):
    v = fibonacci_grid(n).vectors
    dots = v @ v.T
    np.fill_diagonal(dots, -1)
    assert dots.max() < 1 - 1e-12
