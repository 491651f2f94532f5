"""Sphere-valued maps and their integral functionals.

A SphereMap stores one unit 3-vector per grid node.  The functionals here
are the averaged degree integral, the Dirichlet energy, the conformal
deficit (energy minus one), and the squared gradient distance between two
maps.  Gradients are spectral and cached on the map.
"""

import numpy as np

from . import harmonics
from .errors import DegenerateMapError
from .grid import VectorField, weighted_mean

_UNIT_TOL = 1e-12
_MIN_NORM = 1e-8


class SphereMap:
    """Discretized map from the sphere to itself: unit values on grid nodes.

    The spectral gradient and the harmonic expansion are computed lazily and
    cached; the fill is idempotent, so concurrent readers are safe.
    """

    def __init__(self, grid, values, _skip_check=False):
        values = np.asarray(values, dtype=float)
        if values.shape != (grid.n_nodes, 3):
            raise ValueError(
                f"map values shape {values.shape}, expected ({grid.n_nodes}, 3)")
        if not _skip_check:
            norms = np.linalg.norm(values, axis=1)
            worst = np.max(np.abs(norms - 1.0))
            if worst > _UNIT_TOL:
                raise ValueError(
                    f"map values deviate from unit norm by {worst:.3e} "
                    f"(tolerance {_UNIT_TOL})")
        self.grid = grid
        self.values = values.copy()
        self.values.setflags(write=False)
        self._gradient = None
        self._expansion = None

    @property
    def gradient(self):
        """Per-node 3x3 tangential Jacobian (rows components, columns ambient)."""
        if self._gradient is None:
            grad = harmonics.tangential_gradient(self)
            grad.setflags(write=False)
            self._gradient = grad
        return self._gradient

    def expansion(self):
        """Harmonic expansion of the values at the grid's exact band."""
        if self._expansion is None:
            k_max = harmonics.max_k_for_grid(self.grid)
            self._expansion = harmonics.sh_analyze(
                VectorField(self.grid, self.values), k_max)
        return self._expansion

    def directional_derivatives(self):
        """(du/dtau1, du/dtau2) as two (n, 3) arrays from the cached gradient."""
        g = self.gradient
        d1 = np.einsum("nij,nj->ni", g, self.grid.tau1)
        d2 = np.einsum("nij,nj->ni", g, self.grid.tau2)
        return d1, d2

    def rotate(self, rotation):
        """Post-compose with a rotation of the target sphere."""
        return SphereMap(self.grid, self.values @ np.asarray(rotation).T)


def identity_map(grid):
    return SphereMap(grid, grid.nodes)


def normalize_to_sphere(raw):
    """Project a vector field radially onto the sphere, node by node."""
    norms = np.linalg.norm(raw.values, axis=1)
    bad = np.min(norms)
    if bad < _MIN_NORM:
        raise DegenerateMapError(
            f"field norm {bad:.3e} below {_MIN_NORM} at node "
            f"{int(np.argmin(norms))}; cannot project to the sphere")
    return SphereMap(raw.grid, raw.values / norms[:, None], _skip_check=True)


def degree(u):
    """Averaged degree integral mean(<u, d1 u x d2 u>).

    Returned as a real; for admissible maps it sits near an integer and the
    residual is a useful resolution diagnostic, so it is never rounded.
    """
    d1, d2 = u.directional_derivatives()
    integrand = np.einsum("ni,ni->n", u.values, np.cross(d1, d2))
    return weighted_mean(u.grid, integrand)


def dirichlet_energy(u):
    """Half the averaged squared Frobenius norm of the gradient."""
    dens = np.einsum("nij,nij->n", u.gradient, u.gradient)
    return 0.5 * weighted_mean(u.grid, dens)


def deficit(u):
    """Conformal deficit: Dirichlet energy minus 1; zero exactly on Moebius maps."""
    return dirichlet_energy(u) - 1.0


def gradient_distance_sq(u, v):
    """mean(|grad u - grad v|^2) for two maps on the same grid."""
    if u.grid is not v.grid and not u.grid.same_layout(v.grid):
        raise ValueError("maps live on different grids")
    diff = u.gradient - v.gradient
    dens = np.einsum("nij,nij->n", diff, diff)
    return weighted_mean(u.grid, dens)


def reflect(u):
    """Post-compose with the reflection (x1, x2, -x3); negates the degree."""
    values = u.values.copy()
    values[:, 2] *= -1.0
    return SphereMap(u.grid, values, _skip_check=True)


# --- map file format ------------------------------------------------------
#
# Text format, one file per map:
#   header:  #spheremap v1 n_theta=<int> n_phi=<int>
#   then one line per node in grid order: theta phi u1 u2 u3
# with 17-significant-digit decimals, which round-trip doubles exactly.

_HEADER_PREFIX = "#spheremap v1"


def write_map(u, path):
    grid = u.grid
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{_HEADER_PREFIX} n_theta={grid.n_theta} n_phi={grid.n_phi}\n")
        for i in range(grid.n_theta):
            for j in range(grid.n_phi):
                n = grid.node_index(i, j)
                vals = (grid.theta[i], grid.phi[j], *u.values[n])
                fh.write(" ".join(f"{x:.17g}" for x in vals) + "\n")


def read_map(path, grid_factory=None):
    """Read a map file; rebuilds the grid from the header.

    ``grid_factory(n_theta, n_phi)`` may be supplied to reuse cached grids.
    The stored values are taken bit-exactly; theta/phi columns are checked
    against the rebuilt grid.
    """
    from .grid import build_grid

    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith(_HEADER_PREFIX):
            raise ValueError(f"not a spheremap file: header {header!r}")
        fields = dict(part.split("=") for part in header.split()[2:])
        n_theta, n_phi = int(fields["n_theta"]), int(fields["n_phi"])
        grid = (grid_factory or build_grid)(n_theta, n_phi)
        values = np.empty((grid.n_nodes, 3))
        for n in range(grid.n_nodes):
            parts = fh.readline().split()
            if len(parts) != 5:
                raise ValueError(f"malformed node line {n}: expected 5 columns")
            theta, phi = float(parts[0]), float(parts[1])
            i, j = divmod(n, grid.n_phi)
            if abs(theta - grid.theta[i]) > 1e-12 or abs(phi - grid.phi[j]) > 1e-12:
                raise ValueError(
                    f"node {n} coordinates disagree with the rebuilt grid")
            values[n] = [float(p) for p in parts[2:]]
    return SphereMap(grid, values)
