"""Quadrature grids, fields, and averaged integration on the unit sphere.

The grid is Gauss-Legendre in cos(colatitude) crossed with equispaced
longitude.  Weights are normalized to total mass 1, so every integral in the
package is an average over the sphere and no 4*pi factors appear anywhere.
"""

import math
from dataclasses import dataclass

import numpy as np


class SphereGrid:
    """Gauss-Legendre x equispaced-longitude quadrature grid on S^2.

    Nodes are ordered row-major: index ``i * n_phi + j`` for colatitude row
    ``i`` (theta increasing from the north pole) and longitude column ``j``.
    Each node carries an orthonormal tangent pair ``(tau1, tau2)`` oriented so
    that ``tau1 x tau2`` equals the outward normal.  Gauss nodes exclude the
    exact poles, so the coordinate frame is well defined everywhere.

    Instances are immutable after construction; the spectral-table cache is
    filled idempotently and may be shared across threads.
    """

    def __init__(self, n_theta, n_phi):
        if n_theta < 4:
            raise ValueError(f"n_theta must be >= 4, got {n_theta}")
        if n_phi < 8:
            raise ValueError(f"n_phi must be >= 8, got {n_phi}")
        if n_phi % 2 != 0:
            raise ValueError(f"n_phi must be even, got {n_phi}")
        self.n_theta = int(n_theta)
        self.n_phi = int(n_phi)

        mu_asc, w_gl = np.polynomial.legendre.leggauss(self.n_theta)
        # theta increasing from the north pole => mu descending
        self.mu = mu_asc[::-1].copy()
        self.theta = np.arccos(self.mu)
        self.sin_theta = np.sqrt(1.0 - self.mu * self.mu)
        self.phi = 2.0 * np.pi * np.arange(self.n_phi) / self.n_phi
        self.row_weights = (w_gl[::-1] / (2.0 * self.n_phi)).copy()

        ct, st = self.mu, self.sin_theta
        cp, sp = np.cos(self.phi), np.sin(self.phi)
        n = self.n_theta * self.n_phi
        st_r, ct_r = np.repeat(st, self.n_phi), np.repeat(ct, self.n_phi)
        cp_t, sp_t = np.tile(cp, self.n_theta), np.tile(sp, self.n_theta)

        self.nodes = np.stack([st_r * cp_t, st_r * sp_t, ct_r], axis=1)
        self.weights = np.repeat(self.row_weights, self.n_phi)
        self.tau1 = np.stack([ct_r * cp_t, ct_r * sp_t, -st_r], axis=1)
        self.tau2 = np.stack([-sp_t, cp_t, np.zeros(n)], axis=1)

        for arr in (self.mu, self.theta, self.sin_theta, self.phi,
                    self.row_weights, self.nodes, self.weights,
                    self.tau1, self.tau2):
            arr.setflags(write=False)

        self._sh_tables = {}

    @property
    def n_nodes(self):
        return self.n_theta * self.n_phi

    def node_index(self, i, j):
        return i * self.n_phi + j

    def same_layout(self, other):
        return self.n_theta == other.n_theta and self.n_phi == other.n_phi

    def __repr__(self):
        return f"SphereGrid(n_theta={self.n_theta}, n_phi={self.n_phi})"


def build_grid(n_theta, n_phi):
    """Build a quadrature grid; sizes below (4, 8) or odd n_phi are rejected."""
    return SphereGrid(n_theta, n_phi)


def _check_field(grid, values, ncomp):
    values = np.asarray(values, dtype=float)
    expected = (grid.n_nodes,) if ncomp == 1 else (grid.n_nodes, ncomp)
    if values.shape != expected:
        raise ValueError(
            f"field shape {values.shape} does not match grid with "
            f"{grid.n_nodes} nodes (expected {expected})")
    values = values.copy()
    values.setflags(write=False)
    return values


@dataclass(frozen=True)
class ScalarField:
    """One real value per grid node."""

    grid: SphereGrid
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _check_field(self.grid, self.values, 1))


@dataclass(frozen=True)
class VectorField:
    """One 3-vector per grid node (not constrained to the sphere)."""

    grid: SphereGrid
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _check_field(self.grid, self.values, 3))


def compensated_sum(values):
    """Exactly rounded sum of a 1-D array, independent of chunking."""
    return math.fsum(values)


def weighted_mean(grid, values):
    """Average of per-node values with the grid weights, compensated.

    ``values`` may be (n,) or (n, 3); returns a float or a 3-vector.  The
    summation order is the fixed node order, so results are bit-stable.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        return compensated_sum(grid.weights * values)
    return np.array([compensated_sum(grid.weights * values[:, c])
                     for c in range(values.shape[1])])


def mean(field):
    """Averaged integral of a field: the weighted mean over the grid nodes."""
    return weighted_mean(field.grid, field.values)
