import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dualtv.grid import (
    CellField,
    CutoffFunction,
    EdgeField,
    GeometryError,
    GridGeometry,
    divergence,
    divergence_adjoint,
    inner_cells,
    inner_edges,
    interpolate_cutoff,
    inverse_inequality_check,
    norm_cells,
    norm_edges,
)

from conftest import random_cells, random_edges


def brute_div(p: EdgeField) -> np.ndarray:
    """Cell-by-cell evaluation of the flux balance, boundary edges zero."""
    g = p.geometry
    out = np.zeros(g.shape)
    for i in range(g.m1):
        for j in range(g.m2):
            east = p.x[i, j] if i < g.m1 - 1 else 0.0
            west = p.x[i - 1, j] if i > 0 else 0.0
            north = p.y[i, j] if j < g.m2 - 1 else 0.0
            south = p.y[i, j - 1] if j > 0 else 0.0
            out[i, j] = (east - west + north - south) / g.h
    return out


def test_geometry_counts():
    g = GridGeometry(5, 7, 0.5)
    assert g.area == pytest.approx(5 * 7 * 0.25)
    assert g.n_edges == 4 * 7 + 5 * 6
    with pytest.raises(ValueError):
        GridGeometry(0, 3)
    with pytest.raises(ValueError):
        GridGeometry(2, 3, 0.0)


def test_div_of_zero():
    g = GridGeometry(3, 4)
    assert np.all(divergence(EdgeField.zeros(g)).values == 0)


def test_div_single_edge_2x2():
    g = GridGeometry(2, 2)
    p = EdgeField.zeros(g)
    p.x[0, 0] = 1.0
    d = divergence(p).values
    np.testing.assert_array_equal(d, [[1.0, 0.0], [-1.0, 0.0]])


def test_div_sums_to_zero_3x3(rng):
    g = GridGeometry(3, 3)
    p = random_edges(rng, g)
    d = divergence(p).values
    np.testing.assert_allclose(d, brute_div(p), atol=1e-14)
    assert abs(np.sum(d) * g.h**2) < 1e-13


@pytest.mark.parametrize("shape", [(1, 2), (2, 1), (3, 3), (17, 5), (6, 9)])
def test_div_matches_brute_force(rng, shape):
    g = GridGeometry(*shape, h=0.7)
    p = random_edges(rng, g)
    np.testing.assert_allclose(divergence(p).values, brute_div(p), atol=1e-13)


def test_adjoint_of_constant_vanishes():
    g = GridGeometry(4, 6)
    assert np.all(divergence_adjoint(CellField.constant(g, 3.2)).data == 0)


def test_adjoint_single_cell_2x2():
    g = GridGeometry(2, 2)
    u = CellField(g, [[1.0, 0.0], [0.0, 0.0]])
    q = divergence_adjoint(u)
    np.testing.assert_array_equal(q.x, [[1.0, 0.0]])
    np.testing.assert_array_equal(q.y, [[1.0], [0.0]])


def test_adjointness_5x7(rng):
    g = GridGeometry(5, 7)
    p, u = random_edges(rng, g), random_cells(rng, g)
    lhs = g.h**2 * sum(divergence(p).values[i, j] * u.values[i, j] for i in range(5) for j in range(7))
    rhs = g.h**2 * sum(float(a) * float(b) for a, b in zip(p.data, divergence_adjoint(u).data))
    assert abs(lhs - rhs) <= 1e-12 * norm_edges(p) * norm_cells(u)


@given(st.integers(1, 9), st.integers(1, 9), st.floats(0.1, 3.0), st.integers(0, 2**32 - 1))
def test_adjointness_property(m1, m2, h, seed):
    rng = np.random.default_rng(seed)
    g = GridGeometry(m1, m2, h)
    p, u = random_edges(rng, g), random_cells(rng, g)
    gap = inner_cells(divergence(p), u) - inner_edges(p, divergence_adjoint(u))
    assert abs(gap) <= 1e-12 * max(norm_edges(p) * norm_cells(u), 1e-300) * 10


def test_inner_products():
    g = GridGeometry(2, 3)
    one = CellField.constant(g, 1.0)
    assert inner_cells(one, one) == 6.0
    g2 = GridGeometry(2, 2)
    p = EdgeField(g2, np.ones(g2.n_edges))
    assert norm_edges(p) ** 2 == 4.0


def test_cell_norm_is_l2_norm(rng):
    # integrate the piecewise-constant function exactly cell by cell
    g = GridGeometry(4, 3, h=0.25)
    u = random_cells(rng, g)
    integral = sum(u.values[i, j] ** 2 * (g.h * g.h) for i in range(4) for j in range(3))
    assert norm_cells(u) ** 2 == pytest.approx(integral, rel=1e-14)


def test_geometry_mismatch_raises(rng):
    a, b = GridGeometry(3, 3), GridGeometry(3, 4)
    with pytest.raises(GeometryError):
        inner_cells(random_cells(rng, a), random_cells(rng, b))
    with pytest.raises(GeometryError):
        EdgeField(a, np.zeros(5))


def test_cutoff_identity_and_zero(rng):
    g = GridGeometry(4, 5)
    p = random_edges(rng, g)
    one = CutoffFunction(g, np.ones((5, 6)))
    zero = CutoffFunction(g, np.zeros((5, 6)))
    np.testing.assert_array_equal(interpolate_cutoff(one, p).data, p.data)
    assert np.all(interpolate_cutoff(zero, p).data == 0)


def test_cutoff_linear_along_edge():
    g = GridGeometry(2, 1)
    # the only interior edge is vertical at x = h between vertices (1, 0) and (1, 1)
    nodes = np.zeros((3, 2))
    nodes[1, 1] = 1.0
    p = EdgeField(g, [2.0])
    assert interpolate_cutoff(CutoffFunction(g, nodes), p).data[0] == 1.0


def test_inverse_inequality_examples():
    g = GridGeometry(1, 2)
    assert inverse_inequality_check(EdgeField.zeros(g)) == (0.0, 0.0)
    lhs, rhs = inverse_inequality_check(EdgeField(g, [1.0]))
    assert lhs == pytest.approx(2.0, rel=1e-15) and rhs == pytest.approx(8.0, rel=1e-15)


def test_inverse_inequality_random_64(rng):
    g = GridGeometry(64, 64)
    for _ in range(20):
        lhs, rhs = inverse_inequality_check(random_edges(rng, g))
        assert lhs <= rhs


def test_inverse_inequality_is_sharp():
    # checkerboard-signed edges approach the bound on large grids
    g = GridGeometry(40, 40)
    x = np.fromfunction(lambda i, j: (-1.0) ** (i + j), g.x_shape)
    y = np.fromfunction(lambda i, j: (-1.0) ** (i + j), g.y_shape)
    lhs, rhs = inverse_inequality_check(EdgeField.from_components(g, x, y))
    assert 0.85 * rhs < lhs <= rhs


@given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_linearity(m1, m2, seed):
    rng = np.random.default_rng(seed)
    g = GridGeometry(m1, m2)
    p, q = random_edges(rng, g), random_edges(rng, g)
    u, v = random_cells(rng, g), random_cells(rng, g)
    a, b = rng.standard_normal(2)
    theta = CutoffFunction(g, rng.uniform(0, 1, (m1 + 1, m2 + 1)))
    np.testing.assert_allclose(
        divergence(a * p + b * q).values, a * divergence(p).values + b * divergence(q).values, atol=1e-12
    )
    np.testing.assert_allclose(
        divergence_adjoint(a * u + b * v).data,
        a * divergence_adjoint(u).data + b * divergence_adjoint(v).data,
        atol=1e-12,
    )
    np.testing.assert_allclose(
        interpolate_cutoff(theta, a * p + b * q).data,
        a * interpolate_cutoff(theta, p).data + b * interpolate_cutoff(theta, q).data,
        atol=1e-12,
    )


def _ramp_cutoff(g, width, rng):
    """Random rectangle with a linear ramp of the given width."""
    a = np.arange(g.m1 + 1)[:, None]
    b = np.arange(g.m2 + 1)[None, :]
    x0, y0 = rng.integers(0, g.m1 // 3), rng.integers(0, g.m2 // 3)
    x1, y1 = g.m1 - rng.integers(0, g.m1 // 3), g.m2 - rng.integers(0, g.m2 // 3)
    dist = np.minimum(np.minimum(a - x0, x1 - a), np.minimum(b - y0, y1 - b)).astype(float)
    return CutoffFunction(g, np.clip(dist / width, 0, 1))


@pytest.mark.parametrize("m", [16, 32, 64])
def test_interpolation_stability_constant_bounded(rng, m):
    g = GridGeometry(m, m)
    worst = 0.0
    for _ in range(20):
        theta = _ramp_cutoff(g, rng.integers(1, 6), rng)
        p = random_edges(rng, g)
        lhs = norm_cells(divergence(interpolate_cutoff(theta, p))) ** 2
        rhs = norm_cells(divergence(p)) ** 2 + theta.max_gradient() ** 2 * norm_edges(p) ** 2
        worst = max(worst, lhs / rhs)
    assert worst <= 4.0


def test_constraint_diameter(rng):
    for shape in [(1, 2), (3, 3), (17, 5)]:
        g = GridGeometry(*shape)
        p = EdgeField(g, rng.choice([-1.0, 1.0], g.n_edges))
        q = -1.0 * p
        assert norm_edges(p - q) ** 2 <= 8 * g.area
