import math

import numpy as np
import pytest
from scipy.special import lpmv

from sphere_rigidity import (ScalarField, VectorField, ResolutionError,
                             basis_field, evaluate_expansion, identity_map,
                             laplace_eigencheck, mean, project, sh_analyze,
                             sh_synthesize, tangential_gradient)
from sphere_rigidity.harmonics import (SHExpansion, _legendre_blocks,
                                       _block_offsets, degree_slice,
                                       mode_index, n_modes)


def _random_unit_points(rng, n):
    pts = rng.normal(size=(n, 3))
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


def test_legendre_blocks_match_scipy():
    """Oracle: scipy's lpmv with the normalization and phase made explicit."""
    rng = np.random.default_rng(2)
    mu = rng.uniform(-0.98, 0.98, 6)
    k_max = 24
    q, _ = _legendre_blocks(mu, k_max)
    offsets = _block_offsets(k_max)
    for m in range(k_max + 1):
        for k in range(m, k_max + 1):
            norm = math.sqrt(
                (2 * k + 1) * math.factorial(k - m) / math.factorial(k + m))
            ref = (-1.0) ** m * norm * lpmv(m, k, mu)
            got = q[offsets[m] + k - m]
            assert np.max(np.abs(got - ref)) < 1e-12 * max(1.0, norm)


def test_x3_is_a_single_first_harmonic(grid16):
    exp = sh_analyze(ScalarField(grid16, grid16.nodes[:, 2]), 6)
    coeffs = exp.coeffs[0].copy()
    main = coeffs[mode_index(1, 0)]
    assert abs(main - 1.0 / math.sqrt(3.0)) < 1e-13
    coeffs[mode_index(1, 0)] = 0.0
    assert np.max(np.abs(coeffs)) < 1e-12


def test_band_limited_round_trip(grid16):
    f = ScalarField(grid16, grid16.nodes[:, 0] * grid16.nodes[:, 1])
    back = sh_synthesize(sh_analyze(f, 6))
    assert np.max(np.abs(back.values - f.values)) < 1e-11


def test_parseval_for_random_low_degree_polynomial(grid16):
    rng = np.random.default_rng(5)
    vals = np.zeros(grid16.n_nodes)
    x = grid16.nodes
    for _ in range(12):
        a, b, c = rng.integers(0, 5, size=3)
        if a + b + c > 4:
            continue
        vals += rng.normal() * x[:, 0] ** a * x[:, 1] ** b * x[:, 2] ** c
    f = ScalarField(grid16, vals)
    exp = sh_analyze(f, 4)
    direct = mean(ScalarField(grid16, vals ** 2))
    assert abs(exp.power() - direct) < 1e-10


def test_projection_examples(grid16):
    u = VectorField(grid16, grid16.nodes)
    p0 = project(u, 0)
    assert np.max(np.abs(p0.values)) < 1e-13
    p1 = project(u, 1)
    assert np.max(np.abs(p1.values - grid16.nodes)) < 1e-12
    f = ScalarField(grid16, grid16.nodes[:, 0] * grid16.nodes[:, 1])
    p2 = project(f, 2)
    assert np.max(np.abs(p2.values - f.values)) < 1e-12


def test_projection_idempotent(grid16):
    rng = np.random.default_rng(7)
    f = ScalarField(grid16, rng.normal(size=grid16.n_nodes))
    once = project(f, 3, k_max=8)
    twice = project(once, 3, k_max=8)
    assert np.max(np.abs(twice.values - once.values)) < 1e-12


def test_resolution_errors(grid16):
    f = ScalarField(grid16, np.ones(grid16.n_nodes))
    with pytest.raises(ResolutionError):
        sh_analyze(f, grid16.n_theta - 1)
    with pytest.raises(ResolutionError):
        sh_analyze(f, 16)  # 2*16 > n_phi - 2 = 30


def test_gradient_of_x3(grid16):
    f = ScalarField(grid16, grid16.nodes[:, 2])
    grad = tangential_gradient(f)
    exact = np.zeros((grid16.n_nodes, 3))
    exact[:, 2] = 1.0
    exact -= grid16.nodes[:, 2][:, None] * grid16.nodes
    assert np.max(np.abs(grad.values - exact)) < 1e-10


def test_gradient_of_identity_is_tangential_projector(grid16):
    u = identity_map(grid16)
    pt = (np.eye(3)[None, :, :]
          - grid16.nodes[:, :, None] * grid16.nodes[:, None, :])
    assert np.max(np.abs(u.gradient - pt)) < 1e-10
    dens = np.einsum("nij,nij->n", u.gradient, u.gradient)
    assert np.max(np.abs(dens - 2.0)) < 1e-10


def test_gradient_rows_tangent(grid16):
    rng = np.random.default_rng(11)
    coeffs = rng.normal(size=(3, n_modes(5)))
    field = sh_synthesize(SHExpansion(5, coeffs), grid=grid16)
    grad = tangential_gradient(field)
    rows_dot_x = np.einsum("nij,nj->ni", grad, grid16.nodes)
    assert np.max(np.abs(rows_dot_x)) < 1e-10


def test_gradient_against_great_circle_finite_differences(grid16):
    """Oracle: centered differences of the analytic formula along great circles."""
    def f(p):
        return p[..., 0] * p[..., 1]

    grad = tangential_gradient(ScalarField(grid16, f(grid16.nodes)))
    rng = np.random.default_rng(13)
    idx = rng.choice(grid16.n_nodes, size=20, replace=False)
    h = 1e-5
    for n in idx:
        x = grid16.nodes[n]
        for v in (grid16.tau1[n], grid16.tau2[n]):
            plus = math.cos(h) * x + math.sin(h) * v
            minus = math.cos(h) * x - math.sin(h) * v
            fd = (f(plus) - f(minus)) / (2.0 * h)
            assert abs(np.dot(grad.values[n], v) - fd) < 1e-6


def test_eigencheck_values(grid16):
    assert abs(laplace_eigencheck(grid16, 1) - 2.0) < 1e-10
    assert abs(laplace_eigencheck(grid16, 1, m=1) - 2.0) < 1e-10
    assert abs(laplace_eigencheck(grid16, 2, m=-2) - 6.0) < 1e-10
    with pytest.raises(ValueError):
        laplace_eigencheck(grid16, 3)


def test_spectral_differentiation_consistency(grid24):
    """mean(<grad f, grad g>) equals the eigenvalue-weighted coefficient sum."""
    rng = np.random.default_rng(17)
    k_max = 6
    ef = SHExpansion(k_max, rng.normal(size=(1, n_modes(k_max))))
    eg = SHExpansion(k_max, rng.normal(size=(1, n_modes(k_max))))
    f = sh_synthesize(ef, grid=grid24)
    g = sh_synthesize(eg, grid=grid24)
    gf = tangential_gradient(f)
    gg = tangential_gradient(g)
    lhs = mean(ScalarField(grid24, np.einsum("ni,ni->n", gf.values, gg.values)))
    rhs = sum(
        (k * (k + 1)) * float(np.sum(ef.coeffs[0, degree_slice(k)]
                                     * eg.coeffs[0, degree_slice(k)]))
        for k in range(k_max + 1))
    assert abs(lhs - rhs) < 1e-9


def test_evaluate_expansion_matches_grid_values(grid24):
    rng = np.random.default_rng(19)
    exp = SHExpansion(5, rng.normal(size=(3, n_modes(5))))
    on_grid = sh_synthesize(exp, grid=grid24).values
    at_nodes = evaluate_expansion(exp, grid24.nodes)
    assert np.max(np.abs(on_grid - at_nodes)) < 1e-11
    pts = _random_unit_points(rng, 40)
    vals = evaluate_expansion(exp, pts)
    assert vals.shape == (40, 3)
    one = evaluate_expansion(exp, pts[0])
    assert np.max(np.abs(one - vals[0])) < 1e-14


def test_basis_field_normalization(grid16):
    f = basis_field(grid16, 2, 1)
    assert abs(mean(ScalarField(grid16, f.values ** 2)) - 1.0) < 1e-12
