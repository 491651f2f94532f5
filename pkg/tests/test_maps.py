import numpy as np
import pytest

from sphere_rigidity import (DegenerateMapError, ScalarField, SphereMap,
                             VectorField, as_map, build_grid, deficit, degree,
                             dirichlet_energy, gradient_distance_sq,
                             identity_map, mean, normalize_to_sphere,
                             pure_dilation, read_map, reflect, write_map)
from sphere_rigidity.experiments import random_band_field
from sphere_rigidity.harmonics import sh_synthesize
from sphere_rigidity.moebius import random_rotation, rotation_about

E3 = np.array([0.0, 0.0, 1.0])


def _perturbed(grid, eps, seed=5, band=(2, 6)):
    h = sh_synthesize(random_band_field(seed, band=band), grid=grid).values
    return normalize_to_sphere(VectorField(grid, grid.nodes + eps * h))


def test_normalize_examples(grid16):
    u = normalize_to_sphere(VectorField(grid16, 2.0 * grid16.nodes))
    assert np.max(np.abs(u.values - grid16.nodes)) < 1e-15
    u2 = normalize_to_sphere(VectorField(grid16, grid16.nodes + 0.0))
    assert np.max(np.abs(u2.values - grid16.nodes)) < 1e-15
    raw = grid16.nodes + 0.1 * np.array([1.0, 0.0, 0.0])
    u3 = normalize_to_sphere(VectorField(grid16, raw))
    again = normalize_to_sphere(VectorField(grid16, u3.values))
    assert np.max(np.abs(again.values - u3.values)) < 1e-15
    assert np.max(np.abs(np.linalg.norm(u3.values, axis=1) - 1.0)) < 1e-15


def test_normalize_rejects_near_zero(grid16):
    raw = grid16.nodes.copy()
    raw[7] = [1e-9, 0.0, 0.0]
    with pytest.raises(DegenerateMapError):
        normalize_to_sphere(VectorField(grid16, raw))


def test_map_unit_norm_validation(grid16):
    with pytest.raises(ValueError):
        SphereMap(grid16, 0.9 * grid16.nodes)


def test_degree_identity_and_reflection(grid32):
    u = identity_map(grid32)
    assert abs(degree(u) - 1.0) < 1e-12
    assert abs(degree(reflect(u)) + 1.0) < 1e-12


def test_degree_moebius_dilation_refines(grid48):
    """Oracle: the degree is invariant under the dilation, so the residual is
    pure discretization error and must fall under refinement."""
    residuals = []
    for n in (24, 32, 48):
        g = build_grid(n, 2 * n)
        u = as_map(pure_dilation(E3, 2.0), g)
        residuals.append(abs(degree(u) - 1.0))
    assert residuals[-1] < 1e-8
    assert residuals[2] <= residuals[0] + 1e-14


def test_energy_and_deficit_identity(grid16):
    u = identity_map(grid16)
    assert abs(dirichlet_energy(u) - 1.0) < 1e-12
    assert abs(deficit(u)) < 1e-12


def test_deficit_moebius(grid48):
    u = as_map(pure_dilation(E3, 2.0), grid48)
    assert abs(deficit(u)) < 1e-8


def test_deficit_quadratic_in_eps(grid32):
    """Oracle: deficit/eps^2 must stabilize as eps halves."""
    ratios = []
    for eps in (0.05, 0.025, 0.0125):
        u = _perturbed(grid32, eps)
        d = deficit(u)
        assert d > 0.0
        ratios.append(d / eps ** 2)
    base = ratios[0]
    for r in ratios[1:]:
        assert abs(r - base) / base < 0.10


def test_gradient_distance_trivial_and_rotation(grid24):
    u = identity_map(grid24)
    assert gradient_distance_sq(u, u) == 0.0
    rot = rotation_about(E3, np.pi)
    v = u.rotate(rot)
    got = gradient_distance_sq(u, v)
    # oracle 1: direct quadrature with the analytic tangential projector
    pt = (np.eye(3)[None, :, :]
          - grid24.nodes[:, :, None] * grid24.nodes[:, None, :])
    diff = pt - np.einsum("ij,njk->nik", rot, pt)
    direct = mean(ScalarField(grid24, np.einsum("nij,nij->n", diff, diff)))
    # oracle 2: closed form (2/3) |I - R|^2
    closed = (2.0 / 3.0) * np.sum((np.eye(3) - rot) ** 2)
    assert abs(got - direct) < 1e-10
    assert abs(got - closed) < 1e-10


def test_gradient_distance_symmetric(grid24):
    rng = np.random.default_rng(23)
    for seed in range(5):
        u = _perturbed(grid24, 0.08, seed=seed)
        v = identity_map(grid24).rotate(random_rotation(rng))
        assert gradient_distance_sq(u, v) == gradient_distance_sq(v, u)


def test_gradient_distance_grid_mismatch(grid16, grid24):
    with pytest.raises(ValueError):
        gradient_distance_sq(identity_map(grid16), identity_map(grid24))


def test_reflect_involution_and_isometry(grid16):
    u = _perturbed(grid16, 0.1, seed=9, band=(2, 4))
    v = reflect(u)
    expected = u.values.copy()
    expected[:, 2] *= -1.0
    assert np.array_equal(v.values, expected)
    assert np.array_equal(reflect(v).values, u.values)
    assert abs(deficit(v) - deficit(u)) < 1e-12


def test_rotation_equivariance(grid24):
    rng = np.random.default_rng(29)
    u = _perturbed(grid24, 0.07, seed=4)
    rot = random_rotation(rng)
    v = u.rotate(rot)
    assert abs(deficit(v) - deficit(u)) < 1e-12
    assert abs(degree(v) - degree(u)) < 1e-12


def test_map_file_round_trip(tmp_path, grid16):
    u = _perturbed(grid16, 0.05, seed=1)
    path = tmp_path / "map.dat"
    write_map(u, path)
    v = read_map(path)
    assert v.grid.n_theta == 16 and v.grid.n_phi == 32
    assert np.array_equal(v.values, u.values)
    # and the file itself is reproduced bit for bit
    path2 = tmp_path / "map2.dat"
    write_map(v, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_read_map_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.dat"
    path.write_text("#wrong v1 n_theta=4 n_phi=8\n")
    with pytest.raises(ValueError):
        read_map(path)
