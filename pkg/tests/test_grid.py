import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sphere_rigidity import ScalarField, VectorField, build_grid, mean


def test_build_grid_node_count_and_weight_sum(grid16):
    assert grid16.n_nodes == 512
    assert abs(np.sum(grid16.weights) - 1.0) < 1e-13
    assert np.all(grid16.weights > 0)


def test_node_norms(grid16):
    norms = np.linalg.norm(grid16.nodes, axis=1)
    assert np.max(np.abs(norms - 1.0)) < 1e-14


def test_frames_orthonormal_right_handed(grid16):
    g = grid16
    assert np.max(np.abs(np.einsum("ni,ni->n", g.tau1, g.tau2))) < 1e-13
    assert np.max(np.abs(np.einsum("ni,ni->n", g.tau1, g.nodes))) < 1e-13
    assert np.max(np.abs(np.einsum("ni,ni->n", g.tau2, g.nodes))) < 1e-13
    assert np.max(np.abs(np.cross(g.tau1, g.tau2) - g.nodes)) < 1e-12


@pytest.mark.parametrize("n_theta,n_phi", [(3, 32), (16, 6), (16, 31)])
def test_build_grid_rejects_bad_sizes(n_theta, n_phi):
    with pytest.raises(ValueError):
        build_grid(n_theta, n_phi)


def test_mean_constant_is_exact(grid16):
    assert mean(ScalarField(grid16, np.ones(grid16.n_nodes))) == 1.0


def test_mean_of_coordinates_vanishes(grid16):
    v = mean(VectorField(grid16, grid16.nodes))
    assert np.max(np.abs(v)) < 1e-14


def test_mean_of_coordinate_products(grid16):
    for i in range(3):
        for j in range(3):
            val = mean(ScalarField(
                grid16, grid16.nodes[:, i] * grid16.nodes[:, j]))
            expected = (1.0 / 3.0) if i == j else 0.0
            assert abs(val - expected) < 1e-12


def test_field_shape_validation(grid16):
    with pytest.raises(ValueError):
        ScalarField(grid16, np.ones(grid16.n_nodes + 1))
    with pytest.raises(ValueError):
        VectorField(grid16, np.ones((grid16.n_nodes, 2)))


def _double_factorial(n):
    out = 1
    while n > 1:
        out *= n
        n -= 2
    return out


def _monomial_average(a, b, c):
    """Average of x^a y^b z^c over the sphere (zero unless all even)."""
    if a % 2 or b % 2 or c % 2:
        return 0.0
    num = (_double_factorial(a - 1) * _double_factorial(b - 1)
           * _double_factorial(c - 1))
    return num / _double_factorial(a + b + c + 1)


@given(st.lists(
    st.tuples(st.integers(0, 8), st.integers(0, 8), st.integers(0, 8)),
    min_size=1, max_size=4))
@settings(max_examples=40, deadline=None)
def test_quadrature_exact_for_low_degree_polynomials(exponents):
    grid = build_grid(16, 34)
    total = np.zeros(grid.n_nodes)
    expected = 0.0
    for a, b, c in exponents:
        if a + b + c > grid.n_theta:
            continue
        total += (grid.nodes[:, 0] ** a * grid.nodes[:, 1] ** b
                  * grid.nodes[:, 2] ** c)
        expected += _monomial_average(a, b, c)
    assert abs(mean(ScalarField(grid, total)) - expected) < 1e-12


def test_mean_linearity(grid16):
    rng = np.random.default_rng(0)
    f = rng.normal(size=grid16.n_nodes)
    g = rng.normal(size=grid16.n_nodes)
    lhs = mean(ScalarField(grid16, 2.0 * f + 3.0 * g))
    rhs = 2.0 * mean(ScalarField(grid16, f)) + 3.0 * mean(ScalarField(grid16, g))
    assert abs(lhs - rhs) < 1e-13
