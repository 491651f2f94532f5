"""Real spherical-harmonic analysis, synthesis, projection, and gradients.

Basis convention: the real basis functions are orthonormal with respect to
the *averaged* inner product ``<f, g> = mean(f * g)``.  Writing mu for
cos(theta) and q_k^m for the associated Legendre function normalized so that
``(1/2) * integral(q^2, mu=-1..1) = 1`` (no Condon-Shortley phase),

    Y_{k, 0}  = q_k^0(mu)
    Y_{k, m}  = sqrt(2) * q_k^m(mu) * cos(m phi)     (m > 0)
    Y_{k,-m}  = sqrt(2) * q_k^m(mu) * sin(m phi)     (m > 0)

Coefficients are stored flat in degree-major order: mode (k, m) lives at
index ``k*k + k + m``, so degree k occupies ``[k*k, (k+1)*(k+1))``.

The transforms are separable (longitude first, then a per-order Legendre
contraction); they run at full quadrature exactness for band-limited input
when ``k_max <= n_theta - 2`` and ``2*k_max <= n_phi - 2``.
"""

import numpy as np

from .errors import ResolutionError
from .grid import ScalarField, VectorField, weighted_mean

_SQRT2 = np.sqrt(2.0)
_EVAL_CHUNK = 4096


def n_modes(k_max):
    return (k_max + 1) ** 2


def mode_index(k, m):
    if abs(m) > k:
        raise ValueError(f"order |m|={abs(m)} exceeds degree k={k}")
    return k * k + k + m


def degree_slice(k):
    """Flat-coefficient slice holding all orders of degree k."""
    return slice(k * k, (k + 1) * (k + 1))


def eigenvalue(k):
    """Laplace-Beltrami eigenvalue of degree-k harmonics."""
    return float(k * (k + 1))


def max_k_for_grid(grid):
    """Largest degree the grid transforms exactly (band-limited input)."""
    return min(grid.n_theta - 2, (grid.n_phi - 2) // 2)


def _block_offsets(k_max):
    """Packed (k, m) layout grouped by m: block m holds k = m .. k_max."""
    offsets = np.zeros(k_max + 2, dtype=int)
    for m in range(k_max + 1):
        offsets[m + 1] = offsets[m] + (k_max + 1 - m)
    return offsets


def _legendre_blocks(mu, k_max, sin_theta=None, want_deriv=False):
    """Normalized associated Legendre values q_k^m(mu), packed by order m.

    Returns (q, dq) where q has shape (n_pairs, len(mu)); dq holds
    d/dtheta q_k^m(cos theta) and is None unless requested.  The upward
    recurrences are stable through k in the hundreds, far beyond desk scale.
    """
    mu = np.asarray(mu, dtype=float)
    if sin_theta is None:
        sin_theta = np.sqrt(np.maximum(0.0, 1.0 - mu * mu))
    offsets = _block_offsets(k_max)
    q = np.empty((offsets[-1], mu.size))

    diag = np.ones_like(mu)
    for m in range(k_max + 1):
        base = offsets[m]
        q[base] = diag
        if m + 1 <= k_max:
            q[base + 1] = np.sqrt(2 * m + 3.0) * mu * diag
        for k in range(m + 2, k_max + 1):
            a = np.sqrt((4.0 * k * k - 1.0) / (k * k - m * m))
            b = np.sqrt(((k - 1.0) ** 2 - m * m) / (4.0 * (k - 1.0) ** 2 - 1.0))
            q[base + k - m] = a * (mu * q[base + k - m - 1] - b * q[base + k - m - 2])
        if m < k_max:
            diag = np.sqrt((2 * m + 3.0) / (2 * m + 2.0)) * sin_theta * diag

    dq = None
    if want_deriv:
        dq = np.zeros_like(q)
        inv_sin = 1.0 / sin_theta
        for m in range(k_max + 1):
            base = offsets[m]
            for k in range(max(m, 1), k_max + 1):
                c = np.sqrt((k * k - m * m) * (2.0 * k + 1.0) / (2.0 * k - 1.0))
                prev = q[base + k - 1 - m] if k - 1 >= m else 0.0
                dq[base + k - m] = (k * mu * q[base + k - m] - c * prev) * inv_sin
    return q, dq


class _GridTables:
    """Per-(grid, k_max) spectral tables: Legendre blocks and trig matrices."""

    def __init__(self, grid, k_max):
        self.k_max = k_max
        self.offsets = _block_offsets(k_max)
        self.q, self.dq = _legendre_blocks(
            grid.mu, k_max, sin_theta=grid.sin_theta, want_deriv=True)
        # m * q / sin(theta): azimuthal-derivative factor, finite at Gauss rows
        self.q_over_sin = np.zeros_like(self.q)
        for m in range(1, k_max + 1):
            blk = slice(self.offsets[m], self.offsets[m + 1])
            self.q_over_sin[blk] = m * self.q[blk] / grid.sin_theta
        marr = np.arange(k_max + 1)
        self.cos_m = np.cos(np.outer(marr, grid.phi))
        self.sin_m = np.sin(np.outer(marr, grid.phi))
        self.analysis_w = grid.row_weights * grid.n_phi  # = gauss weight / 2

    def block(self, m):
        return slice(self.offsets[m], self.offsets[m + 1])


def _tables(grid, k_max):
    key = int(k_max)
    tab = grid._sh_tables.get(key)
    if tab is None:
        tab = _GridTables(grid, k_max)
        grid._sh_tables[key] = tab
    return tab


def _check_resolution(grid, k_max):
    if k_max < 0:
        raise ValueError(f"k_max must be nonnegative, got {k_max}")
    if k_max > grid.n_theta - 2 or 2 * k_max > grid.n_phi - 2:
        raise ResolutionError(
            f"k_max={k_max} exceeds the exact band of grid "
            f"({grid.n_theta}, {grid.n_phi}); need k_max <= "
            f"{max_k_for_grid(grid)}")


class SHExpansion:
    """Spherical-harmonic coefficients of a scalar or 3-vector field.

    ``coeffs`` has shape (n_components, (k_max+1)^2) in the flat mode order
    documented in the module docstring.  The expansion remembers the grid it
    was analyzed on (if any) so it can be synthesized back without repeating
    bookkeeping; expansions built directly from coefficients carry no grid.
    """

    def __init__(self, k_max, coeffs, grid=None):
        coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))
        if coeffs.shape[1] != n_modes(k_max):
            raise ValueError(
                f"expected {n_modes(k_max)} modes for k_max={k_max}, "
                f"got {coeffs.shape[1]}")
        self.k_max = int(k_max)
        self.coeffs = coeffs
        self.grid = grid

    @property
    def n_components(self):
        return self.coeffs.shape[0]

    def eigenvalues(self):
        """Per-mode Laplace-Beltrami eigenvalues k(k+1), flat order."""
        out = np.empty(n_modes(self.k_max))
        for k in range(self.k_max + 1):
            out[degree_slice(k)] = eigenvalue(k)
        return out

    def power(self):
        """Total squared coefficient mass, sum over components and modes."""
        return float(np.sum(self.coeffs ** 2))

    def degree_power(self, k):
        return float(np.sum(self.coeffs[:, degree_slice(k)] ** 2))


def sh_analyze(field, k_max):
    """Forward transform of a field on its grid, exact for band <= k_max."""
    grid = field.grid
    _check_resolution(grid, k_max)
    tab = _tables(grid, k_max)
    values = field.values
    if values.ndim == 1:
        values = values[:, None]
    ncomp = values.shape[1]

    coeffs = np.zeros((ncomp, n_modes(k_max)))
    f2 = values.T.reshape(ncomp, grid.n_theta, grid.n_phi)
    fc = f2 @ tab.cos_m.T / grid.n_phi  # (ncomp, n_theta, k_max+1)
    fs = f2 @ tab.sin_m.T / grid.n_phi
    for m in range(k_max + 1):
        qw = tab.q[tab.block(m)] * tab.analysis_w  # (nk, n_theta)
        ks = np.arange(m, k_max + 1)
        idx = ks * ks + ks
        if m == 0:
            coeffs[:, idx] = fc[:, :, 0] @ qw.T
        else:
            coeffs[:, idx + m] = _SQRT2 * (fc[:, :, m] @ qw.T)
            coeffs[:, idx - m] = _SQRT2 * (fs[:, :, m] @ qw.T)
    return SHExpansion(k_max, coeffs, grid=grid)


def _synthesize_values(expansion, grid, mode="value"):
    """Grid values of the expansion or of one tangential-derivative part.

    mode: "value", "dtheta" (d/dtheta), or "dphi" ((1/sin theta) d/dphi).
    Returns (ncomp, n_nodes).
    """
    k_max = expansion.k_max
    _check_resolution(grid, k_max)
    tab = _tables(grid, k_max)
    ncomp = expansion.n_components
    gc = np.zeros((ncomp, grid.n_theta, k_max + 1))
    gs = np.zeros((ncomp, grid.n_theta, k_max + 1))
    for m in range(k_max + 1):
        ks = np.arange(m, k_max + 1)
        idx = ks * ks + ks
        scale = 1.0 if m == 0 else _SQRT2
        a = expansion.coeffs[:, idx + m]  # cos row (or the m=0 row)
        b = expansion.coeffs[:, idx - m] if m > 0 else None
        if mode == "value":
            basis = tab.q[tab.block(m)]
        elif mode == "dtheta":
            basis = tab.dq[tab.block(m)]
        elif mode == "dphi":
            basis = tab.q_over_sin[tab.block(m)]
        else:
            raise ValueError(f"unknown synthesis mode {mode!r}")
        if mode == "dphi":
            if m == 0:
                continue
            # d/dphi swaps cos <-> sin: cos part gets +b, sin part gets -a
            gc[:, :, m] = scale * (b @ basis)
            gs[:, :, m] = -scale * (a @ basis)
        else:
            gc[:, :, m] = scale * (a @ basis)
            if m > 0:
                gs[:, :, m] = scale * (b @ basis)
    f2 = gc @ tab.cos_m + gs @ tab.sin_m
    return f2.reshape(ncomp, grid.n_nodes)


def sh_synthesize(expansion, grid=None):
    """Inverse transform onto the expansion's grid (or an explicit one)."""
    grid = grid if grid is not None else expansion.grid
    if grid is None:
        raise ValueError("expansion has no grid; pass one explicitly")
    values = _synthesize_values(expansion, grid, mode="value")
    if values.shape[0] == 1:
        return ScalarField(grid, values[0])
    return VectorField(grid, values.T.copy())


def project(field, k, k_max=None):
    """Orthogonal projection of a field onto the degree-k harmonics.

    The field is analyzed up to ``k_max`` (default: the larger of k and the
    grid's exact band) and only the degree-k block is synthesized back, so
    projecting twice is exactly idempotent up to transform round-off.
    """
    if k_max is None:
        k_max = max(k, max_k_for_grid(field.grid))
    if k > k_max:
        raise ValueError(f"projection degree k={k} exceeds k_max={k_max}")
    expansion = sh_analyze(field, k_max)
    kept = np.zeros_like(expansion.coeffs)
    sl = degree_slice(k)
    kept[:, sl] = expansion.coeffs[:, sl]
    return sh_synthesize(SHExpansion(k_max, kept, grid=field.grid))


def evaluate_expansion(expansion, points):
    """Evaluate the truncated expansion at arbitrary unit vectors.

    ``points`` is (m, 3); returns (m,) for scalar expansions, (m, 3) for
    vector ones.  Work is chunked to bound the Legendre-table memory.
    """
    points = np.asarray(points, dtype=float)
    single = points.ndim == 1
    pts = np.atleast_2d(points)
    k_max = expansion.k_max
    offsets = _block_offsets(k_max)
    ncomp = expansion.n_components
    out = np.zeros((pts.shape[0], ncomp))

    for lo in range(0, pts.shape[0], _EVAL_CHUNK):
        chunk = pts[lo:lo + _EVAL_CHUNK]
        mu = np.clip(chunk[:, 2], -1.0, 1.0)
        phi = np.arctan2(chunk[:, 1], chunk[:, 0])
        q, _ = _legendre_blocks(mu, k_max)
        acc = np.zeros((ncomp, chunk.shape[0]))
        for m in range(k_max + 1):
            ks = np.arange(m, k_max + 1)
            idx = ks * ks + ks
            qb = q[offsets[m]:offsets[m + 1]]
            if m == 0:
                acc += expansion.coeffs[:, idx] @ qb
            else:
                ca = expansion.coeffs[:, idx + m] @ qb
                cb = expansion.coeffs[:, idx - m] @ qb
                acc += _SQRT2 * (ca * np.cos(m * phi) + cb * np.sin(m * phi))
        out[lo:lo + _EVAL_CHUNK] = acc.T
    if ncomp == 1:
        out = out[:, 0]
    return out[0] if single else out


def tangential_gradient(field_or_map, k_max=None):
    """Surface gradient computed spectrally.

    For a scalar field returns a VectorField of tangent vectors.  For a
    vector field or sphere map returns an (n, 3, 3) array whose rows are
    components and columns ambient directions; every row is tangent to the
    sphere at its node.
    """
    grid = field_or_map.grid
    if k_max is None:
        k_max = max_k_for_grid(grid)
    values = field_or_map.values
    is_scalar = values.ndim == 1
    src = ScalarField(grid, values) if is_scalar else VectorField(grid, values)
    expansion = sh_analyze(src, k_max)
    d_theta = _synthesize_values(expansion, grid, mode="dtheta")
    d_phi = _synthesize_values(expansion, grid, mode="dphi")
    if is_scalar:
        vec = d_theta[0, :, None] * grid.tau1 + d_phi[0, :, None] * grid.tau2
        return VectorField(grid, vec)
    grad = (d_theta.T[:, :, None] * grid.tau1[:, None, :]
            + d_phi.T[:, :, None] * grid.tau2[:, None, :])
    return grad


def basis_field(grid, k, m):
    """The single real basis function Y_{k,m} sampled on the grid."""
    coeffs = np.zeros((1, n_modes(k)))
    coeffs[0, mode_index(k, m)] = 1.0
    return sh_synthesize(SHExpansion(k, coeffs), grid=grid)


def laplace_eigencheck(grid, k, m=0):
    """Rayleigh quotient mean(|grad f|^2) / mean(f^2) for a degree-k harmonic.

    Returns k(k+1) up to quadrature round-off; k is restricted to the two
    gap-relevant degrees.
    """
    if k not in (1, 2):
        raise ValueError(f"eigencheck supports k in {{1, 2}}, got {k}")
    f = basis_field(grid, k, m)
    grad = tangential_gradient(f, k_max=min(k + 2, max_k_for_grid(grid)))
    num = weighted_mean(grid, np.sum(grad.values ** 2, axis=1))
    den = weighted_mean(grid, f.values ** 2)
    return num / den
