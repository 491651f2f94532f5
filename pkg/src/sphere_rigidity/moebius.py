"""The orientation-preserving Moebius group of the sphere.

Every transform is stored as rotation * conformal dilation: x maps to
``R * dilate(xi, lam, x)`` where the dilation conjugates the plane scaling
p -> lam*p through stereographic projection at xi.  The projection
convention is fixed here: project from the antipode -xi onto the affine
tangent plane at xi, so the equator of xi lands on the circle of radius 2.

Useful exact identities used throughout:

    dilate(xi, 1, .)        = identity
    dilate(xi, lam, .)^-1   = dilate(xi, 1/lam, .)
    dilate(-xi, lam, .)     = dilate(xi, 1/lam, .)
    R * dilate(xi, lam) * R^T = dilate(R xi, lam)
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from . import harmonics
from .errors import CenteringError, PoleError, RepresentationError
from .grid import VectorField, build_grid, weighted_mean
from .maps import SphereMap, degree, normalize_to_sphere

_EYE3 = np.eye(3)
_FIT_TOL = 1e-8
_LAM_FLOOR = 2.0 ** -10


# --- rotations -------------------------------------------------------------

def rotation_from_rotvec(v):
    """Rodrigues formula: rotation by angle |v| about axis v/|v|."""
    v = np.asarray(v, dtype=float)
    angle = np.linalg.norm(v)
    if angle < 1e-300:
        return _EYE3.copy()
    axis = v / angle
    k = np.array([[0.0, -axis[2], axis[1]],
                  [axis[2], 0.0, -axis[0]],
                  [-axis[1], axis[0], 0.0]])
    return _EYE3 + math.sin(angle) * k + (1.0 - math.cos(angle)) * (k @ k)


def rotation_about(axis, angle):
    axis = np.asarray(axis, dtype=float)
    return rotation_from_rotvec(axis / np.linalg.norm(axis) * angle)


def random_rotation(rng):
    """Haar-uniform rotation from a normalized random quaternion."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def random_unit_vector(rng):
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def _tangent_basis(xi):
    """Deterministic orthonormal basis (t1, t2) of the plane orthogonal to xi."""
    axis = np.zeros(3)
    axis[int(np.argmin(np.abs(xi)))] = 1.0
    t1 = axis - np.dot(axis, xi) * xi
    t1 /= np.linalg.norm(t1)
    return t1, np.cross(xi, t1)


# --- stereographic projection and the conformal dilation --------------------

def stereo(xi, x):
    """Chart coordinates of x in the tangent plane at xi (pole at -xi).

    The plane is spanned by the deterministic basis of ``_tangent_basis``;
    xi maps to the origin and the equator of xi to the circle of radius 2.
    """
    xi = np.asarray(xi, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.linalg.norm(x + xi) < 1e-10:
        raise PoleError("stereographic projection evaluated at its pole -xi")
    s = float(np.dot(x, xi))
    t = 2.0 / (1.0 + s)
    p = t * x + (t - 2.0) * xi
    t1, t2 = _tangent_basis(xi)
    return np.array([np.dot(p, t1), np.dot(p, t2)])


def stereo_inv(xi, p):
    """Inverse of ``stereo``: chart coordinates back to the unit sphere."""
    xi = np.asarray(xi, dtype=float)
    p = np.asarray(p, dtype=float)
    t1, t2 = _tangent_basis(xi)
    vec = p[0] * t1 + p[1] * t2
    r2 = float(p[0] * p[0] + p[1] * p[1])
    x = (4.0 * vec + (4.0 - r2) * xi) / (4.0 + r2)
    return x / np.linalg.norm(x)


def dilate(xi, lam, x):
    """Conformal dilation by factor lam fixing +-xi, in closed form.

    Equals stereo_inv(xi, lam * stereo(xi, x)) but has no chart pole and
    vectorizes over x of shape (..., 3).
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    s = pts @ xi
    d = (1.0 + s) + lam * lam * (1.0 - s)
    coef = (1.0 + s) - 2.0 * lam * s - lam * lam * (1.0 - s)
    y = (2.0 * lam * pts + coef[:, None] * xi) / d[:, None]
    y /= np.linalg.norm(y, axis=-1, keepdims=True)
    return y[0] if single else y


def conformal_scale(xi, lam, x):
    """Pointwise conformal factor of the dilation; its square scales area."""
    s = np.asarray(x, dtype=float) @ xi
    return 2.0 * lam / ((1.0 + s) + lam * lam * (1.0 - s))


# --- the transform type ------------------------------------------------------

@dataclass(frozen=True)
class MoebiusTransform:
    """Element of the orientation-preserving Moebius group.

    Represents x -> rotation @ dilate(xi, lam, x).
    """

    rotation: np.ndarray
    xi: np.ndarray
    lam: float

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=float).copy()
        xi = np.asarray(self.xi, dtype=float).copy()
        if rot.shape != (3, 3):
            raise ValueError("rotation must be 3x3")
        if np.max(np.abs(rot.T @ rot - _EYE3)) > 1e-12:
            raise ValueError("rotation is not orthogonal within 1e-12")
        if abs(np.linalg.det(rot) - 1.0) > 1e-12:
            raise ValueError("rotation must have determinant 1")
        if xi.shape != (3,) or abs(np.linalg.norm(xi) - 1.0) > 1e-12:
            raise ValueError("xi must be a unit 3-vector")
        if not self.lam > 0.0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        rot.setflags(write=False)
        xi.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "lam", float(self.lam))

    @property
    def is_identity(self):
        return self.lam == 1.0 and np.array_equal(self.rotation, _EYE3)


def identity_transform():
    return MoebiusTransform(_EYE3.copy(), np.array([0.0, 0.0, 1.0]), 1.0)


def pure_dilation(xi, lam):
    return MoebiusTransform(_EYE3.copy(), np.asarray(xi, dtype=float), lam)


def pure_rotation(rotation):
    return MoebiusTransform(rotation, np.array([0.0, 0.0, 1.0]), 1.0)


def apply(phi, x):
    """Evaluate the transform at unit vectors of shape (..., 3)."""
    if phi.lam == 1.0:
        return np.asarray(x, dtype=float) @ phi.rotation.T
    return dilate(phi.xi, phi.lam, x) @ phi.rotation.T


def as_map(phi, grid):
    """Sample the transform on a grid as a SphereMap (exact, no interpolation)."""
    return SphereMap(grid, apply(phi, grid.nodes), _skip_check=True)


def inverse(phi):
    """Exact inverse: (R, xi, lam)^-1 = (R^T, R xi, 1/lam)."""
    return MoebiusTransform(phi.rotation.T.copy(), phi.rotation @ phi.xi,
                            1.0 / phi.lam)


def transform_line(phi):
    """Serialize as one line: 9 rotation entries row-major, xi, lam; 13 decimals."""
    vals = list(phi.rotation.ravel()) + list(phi.xi) + [phi.lam]
    return " ".join(f"{v:.13f}" for v in vals)


def parse_transform_line(line):
    vals = [float(tok) for tok in line.split()]
    if len(vals) != 13:
        raise ValueError(f"expected 13 numbers on a transform line, got {len(vals)}")
    rot = np.array(vals[:9]).reshape(3, 3)
    return MoebiusTransform(rot, np.array(vals[9:12]), vals[12])


# --- composition via parameter recovery -------------------------------------

_fit_grid_cache = {}


def _fit_grid():
    grid = _fit_grid_cache.get("grid")
    if grid is None:
        grid = build_grid(24, 48)
        _fit_grid_cache["grid"] = grid
    return grid


def _polar_rotation(b):
    u, _, vt = np.linalg.svd(b)
    if np.linalg.det(u @ vt) < 0.0:
        u = u.copy()
        u[:, -1] *= -1.0
    return u @ vt


def _recover_transform(func):
    """Fit (R, xi, lam) to a sampled sphere map known to be Moebius.

    Initializes the rotation from the polar factor of the first moment
    matrix, the axis from the mean of the derotated map, and the dilation
    from a chart length ratio; then polishes all six parameters by damped
    least squares over the sample nodes.  Raises RepresentationError if the
    certified max pointwise residual exceeds the tolerance.
    """
    grid = _fit_grid()
    pts = grid.nodes
    target = func(pts)

    moment = 3.0 * (target * grid.weights[:, None]).T @ pts
    rot0 = _polar_rotation(moment)
    derot = target @ rot0

    if np.max(np.linalg.norm(derot - pts, axis=1)) <= 1e-11:
        return MoebiusTransform(rot0, np.array([0.0, 0.0, 1.0]), 1.0)

    v = weighted_mean(grid, derot)
    candidates = []
    if np.linalg.norm(v) > 1e-7:
        candidates.append(v / np.linalg.norm(v))
    quad = (derot * grid.weights[:, None]).T @ derot
    evals, evecs = np.linalg.eigh(0.5 * (quad + quad.T))
    candidates.extend([evecs[:, -1], evecs[:, 0]])

    best = None
    for xi0 in candidates:
        t1, _ = _tangent_basis(xi0)
        chart = stereo(xi0, rot0.T @ func(t1))
        lam0 = max(np.linalg.norm(chart) / 2.0, 1e-6)

        def residuals(p, xi0=xi0, lam0=lam0):
            cand = _params_to_transform(p, rot0, xi0, lam0)
            return (apply(cand, pts) - target).ravel()

        sol = least_squares(residuals, np.zeros(6), method="lm",
                            xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=400)
        cand = _params_to_transform(sol.x, rot0, xi0, lam0)
        resid = np.max(np.linalg.norm(apply(cand, pts) - target, axis=1))
        if best is None or resid < best[1]:
            best = (cand, resid)
        if resid <= 1e-11:
            break

    cand, resid = best
    if resid > _FIT_TOL:
        raise RepresentationError(
            f"composite map is {resid:.3e} from the nearest rotation-dilation "
            f"representation (tolerance {_FIT_TOL})")
    return cand


def _params_to_transform(p, rot0, xi0, lam0):
    rot = rot0 @ rotation_from_rotvec(p[0:3])
    t1, t2 = _tangent_basis(xi0)
    xi = xi0 + p[3] * t1 + p[4] * t2
    xi = xi / np.linalg.norm(xi)
    lam = lam0 * math.exp(p[5])
    return MoebiusTransform(rot, xi, lam)


def compose(a, b):
    """Transform acting as x -> a(b(x)).

    Structurally trivial cases (either factor a pure rotation, coaxial
    dilations) compose exactly from the representation; the generic case is
    recovered numerically with a fit-residual certificate.
    """
    if a.is_identity:
        return b
    if b.is_identity:
        return a
    if a.lam == 1.0:
        return MoebiusTransform(a.rotation @ b.rotation, b.xi, b.lam)
    xi_a = b.rotation.T @ a.xi
    if b.lam == 1.0:
        return MoebiusTransform(a.rotation @ b.rotation, xi_a, a.lam)
    dot = float(np.dot(xi_a, b.xi))
    if dot > 1.0 - 1e-14:
        return MoebiusTransform(a.rotation @ b.rotation, b.xi, a.lam * b.lam)
    if dot < -1.0 + 1e-14:
        return MoebiusTransform(a.rotation @ b.rotation, b.xi, b.lam / a.lam)
    return _recover_transform(lambda x: apply(a, apply(b, x)))


# --- composition with discretized maps --------------------------------------

def precompose(u, phi):
    """The map u composed with phi, via spectral interpolation.

    u is analyzed at the grid's exact band, the truncated expansion is
    evaluated at phi(node), and the result is radially renormalized.  The
    identity transform returns u unchanged.
    """
    if phi.is_identity:
        return u
    pts = apply(phi, u.grid.nodes)
    vals = harmonics.evaluate_expansion(u.expansion(), pts)
    return normalize_to_sphere(VectorField(u.grid, vals))


def homotopy_F(u, xi, lam):
    """Mean of u composed with the dilation at (xi, lam).

    At lam = 1 this is the mean of u itself, independent of xi.
    """
    if not 0.0 < lam <= 1.0:
        raise ValueError(f"lam must lie in (0, 1], got {lam}")
    if lam == 1.0:
        return weighted_mean(u.grid, u.values)
    composed = precompose(u, pure_dilation(xi, lam))
    return weighted_mean(u.grid, composed.values)


# --- centering ---------------------------------------------------------------

@dataclass(frozen=True)
class CenteringResult:
    """Outcome of the mean-centering solve: psi is a pure dilation."""

    psi: MoebiusTransform
    residual: np.ndarray
    iterations: int


def _centering_fast_mean(u):
    """Closure evaluating mean(u o dilation) by conformal change of variables.

    Pulling the dilation back onto the grid nodes replaces interpolation by
    the exact area factor of the inverse dilation, which makes each solver
    residual evaluation O(n) with no spectral work.
    """
    wu = u.grid.weights[:, None] * u.values
    nodes = u.grid.nodes

    def fast_mean(xi, lam):
        jac = conformal_scale(xi, 1.0 / lam, nodes) ** 2
        return jac @ wu

    return fast_mean


def _damped_newton(fun, xi, lam, tol, max_iter):
    """Damped quasi-root-finding on (xi in a local chart, log lam)."""
    f = fun(xi, lam)
    iters = 0
    for _ in range(max_iter):
        fnorm = np.linalg.norm(f)
        if fnorm <= tol:
            return xi, lam, f, iters, True
        t1, t2 = _tangent_basis(xi)
        h = 1e-6
        jac = np.empty((3, 3))
        for c, probe in enumerate((
                lambda: (xi + h * t1, lam),
                lambda: (xi + h * t2, lam),
                lambda: (xi, min(lam * math.exp(h), 1.0)))):
            xp, lp = probe()
            xp = xp / np.linalg.norm(xp)
            jac[:, c] = (fun(xp, lp) - f) / h
        try:
            step = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(jac, -f, rcond=None)[0]
        norm_step = np.linalg.norm(step)
        if norm_step > 2.0:
            step *= 2.0 / norm_step
        improved = False
        alpha = 1.0
        for _ in range(9):
            xi_n = xi + alpha * (step[0] * t1 + step[1] * t2)
            xi_n /= np.linalg.norm(xi_n)
            lam_n = min(max(lam * math.exp(alpha * step[2]), _LAM_FLOOR), 1.0)
            f_n = fun(xi_n, lam_n)
            if np.linalg.norm(f_n) < (1.0 - 1e-4 * alpha) * fnorm:
                xi, lam, f = xi_n, lam_n, f_n
                improved = True
                break
            alpha *= 0.5
        iters += 1
        if not improved:
            return xi, lam, f, iters, False
    return xi, lam, f, iters, np.linalg.norm(f) <= tol


_coarse_grid_cache = {}


def _coarse_start_points():
    pts = _coarse_grid_cache.get("pts")
    if pts is None:
        pts = build_grid(8, 16).nodes
        _coarse_grid_cache["pts"] = pts
    return pts


def center_map(u, tol=1e-8, max_newton=40):
    """Find a pure dilation psi with |mean(u o psi)| below tolerance.

    The residual is driven by damped Newton steps on the three search
    parameters, using the fast change-of-variables mean; each candidate is
    certified (and, if needed, polished) against the interpolation-based
    composition that defines the returned residual.  On stagnation the
    solver falls back to a coarse sweep of starting points over the whole
    sphere and dilation factors 2^0 .. 2^-6 before declaring failure.
    """
    deg = degree(u)
    if abs(deg - 1.0) > 1e-3:
        raise ValueError(
            f"centering requires a degree-1 map; computed degree {deg:.6f}")
    grid = u.grid
    b0 = weighted_mean(grid, u.values)
    if np.linalg.norm(b0) <= tol:
        return CenteringResult(identity_transform(), b0, 0)

    fast = _centering_fast_mean(u)

    def slow(xi, lam):
        composed = precompose(u, pure_dilation(xi, lam))
        return weighted_mean(grid, composed.values)

    bhat = b0 / np.linalg.norm(b0)
    opp = grid.nodes[int(np.argmin(u.values @ bhat))]
    starts = [(opp, 0.5), (opp, 0.25), (opp, 0.1), (opp, 0.05),
              (-bhat, 0.5), (bhat, 0.5)]

    total_iters = 0
    best = (None, np.inf)

    def finish(xi, lam, iters):
        nonlocal total_iters, best
        total_iters += iters
        resid = slow(xi, lam)
        rnorm = np.linalg.norm(resid)
        if rnorm <= tol:
            return CenteringResult(pure_dilation(xi, lam), resid, total_iters)
        if rnorm <= 100.0 * tol:
            xi2, lam2, _, it2, ok = _damped_newton(slow, xi, lam, tol, 8)
            total_iters += it2
            if ok:
                resid2 = slow(xi2, lam2)
                if np.linalg.norm(resid2) <= tol:
                    return CenteringResult(pure_dilation(xi2, lam2), resid2,
                                           total_iters)
                rnorm = min(rnorm, np.linalg.norm(resid2))
        if rnorm < best[1]:
            best = ((xi, lam), rnorm)
        return None

    for xi0, lam0 in starts:
        xi, lam, _, iters, ok = _damped_newton(fast, xi0, lam0, 0.2 * tol,
                                               max_newton)
        if ok:
            result = finish(xi, lam, iters)
            if result is not None:
                return result
        else:
            total_iters += iters

    # coarse homotopy-style sweep over the whole sphere and small dilations
    lam_ladder = 2.0 ** (-0.5 * np.arange(0, 13))
    scored = []
    for xi0 in _coarse_start_points():
        for lam0 in lam_ladder:
            scored.append((np.linalg.norm(fast(xi0, lam0)), xi0, lam0))
    scored.sort(key=lambda t: t[0])
    for _, xi0, lam0 in scored[:5]:
        xi, lam, _, iters, ok = _damped_newton(fast, xi0, lam0, 0.2 * tol,
                                               max_newton)
        if ok:
            result = finish(xi, lam, iters)
            if result is not None:
                return result
        else:
            total_iters += iters

    hint = ""
    if best[0] is not None and best[0][1] <= _LAM_FLOOR * 1.0001:
        hint = ("; dilation factor pinned at the lower search bound, which "
                "signals under-resolution or near-bubbling")
    raise CenteringError(
        f"centering failed after the restart schedule; best residual "
        f"{best[1]:.3e} (tolerance {tol}){hint}",
        best_residual=best[1])


def random_moebius(seed, lambda_range=(0.25, 4.0)):
    """Seeded random transform: Haar rotation, uniform xi, log-uniform lam."""
    lo, hi = float(lambda_range[0]), float(lambda_range[1])
    if not (0.0 < lo <= hi):
        raise ValueError(f"invalid lambda range ({lo}, {hi})")
    if lo < 0.1 - 1e-12 or hi > 10.0 + 1e-12:
        raise ValueError(
            f"lambda range ({lo}, {hi}) outside the resolvable band [0.1, 10]")
    rng = np.random.default_rng(seed)
    rot = random_rotation(rng)
    xi = random_unit_vector(rng)
    lam = math.exp(rng.uniform(math.log(lo), math.log(hi)))
    return MoebiusTransform(rot, xi, lam)
