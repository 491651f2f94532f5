"""End-to-end rigidity analysis for degree-1 maps of the sphere.

Given an admissible map u, the pipeline mean-centers it with a conformal
dilation psi, extracts the linear coefficient A of the centered map, polar
decomposes A into a rotation R0 times a symmetric stretch, and certifies the
chain of identities and inequalities that bound the gradient distance from u
to the candidate Moebius map phi = R0 * psi^-1 by a multiple of the
conformal deficit.  Every quantity the chain uses is exposed as its own
operation so each step can be checked in isolation.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from . import harmonics
from .errors import CenteringError, OutOfRegimeError
from .grid import VectorField, weighted_mean
from .maps import SphereMap, deficit, degree, gradient_distance_sq
from .moebius import (MoebiusTransform, as_map, center_map, compose, inverse,
                      precompose, pure_rotation, rotation_from_rotvec,
                      transform_line, _polar_rotation, _tangent_basis)

_CENTER_TOL = 1e-6
_ZERO_DEFICIT = 1e-13
_INV_NORM_SQ_MAX = 4.0


def linear_coefficient(u_centered):
    """Linear coefficient A with A_ij = 3 * mean(u_i x_j).

    Equals the gradient at the origin of the harmonic continuation of u,
    i.e. the matrix of the degree-1 harmonic part; requires a centered map.
    """
    b = weighted_mean(u_centered.grid, u_centered.values)
    if np.linalg.norm(b) > _CENTER_TOL:
        raise ValueError(
            f"linear coefficient requires |mean(u)| <= {_CENTER_TOL}; "
            f"got {np.linalg.norm(b):.3e}")
    grid = u_centered.grid
    a = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            a[i, j] = 3.0 * weighted_mean(
                grid, u_centered.values[:, i] * grid.nodes[:, j])
    return a


def linear_coefficient_sh(u_centered):
    """Same matrix read off the degree-1 harmonic coefficients (cross-check)."""
    exp = harmonics.sh_analyze(
        VectorField(u_centered.grid, u_centered.values), 2)
    sqrt3 = math.sqrt(3.0)
    cols = [harmonics.mode_index(1, 1), harmonics.mode_index(1, -1),
            harmonics.mode_index(1, 0)]
    return sqrt3 * exp.coeffs[:, cols]


@dataclass(frozen=True)
class PolarData:
    """Polar factors of the linear coefficient and eigenvalue shifts."""

    A: np.ndarray
    R0: np.ndarray
    S: np.ndarray
    alpha: np.ndarray          # singular values, ascending
    lambda_shifts: np.ndarray  # alpha - 1
    lambda_sum: float
    Lambda_sq: float
    detA: float


def polar_decompose(a):
    """A = R0 * S with R0 a rotation and S symmetric positive definite.

    Requires det A > 0 (the regime in which the distance to the rotations is
    the sum of squared singular-value shifts); otherwise raises.
    """
    a = np.asarray(a, dtype=float)
    det = float(np.linalg.det(a))
    if det <= 0.0:
        raise OutOfRegimeError(
            f"polar decomposition requires det A > 0, got {det:.3e}")
    u, sig, vt = np.linalg.svd(a)
    r0 = u @ vt
    s = vt.T @ np.diag(sig) @ vt
    alpha = np.sort(sig)
    shifts = alpha - 1.0
    return PolarData(
        A=a.copy(), R0=r0, S=s, alpha=alpha, lambda_shifts=shifts,
        lambda_sum=float(np.sum(shifts)),
        Lambda_sq=float(np.sum(shifts ** 2)),
        detA=det)


def w_field(u_centered, a):
    """Renormalized remainder w(x) = A^-1 (u(x) - A x); ambient-valued."""
    a = np.asarray(a, dtype=float)
    try:
        inv = np.linalg.inv(a)
    except np.linalg.LinAlgError:
        raise OutOfRegimeError("linear coefficient is singular") from None
    inv_sq = float(np.sum(inv ** 2))
    if inv_sq > _INV_NORM_SQ_MAX:
        raise OutOfRegimeError(
            f"|A^-1|^2 = {inv_sq:.3f} exceeds {_INV_NORM_SQ_MAX}; the "
            f"certified chain does not apply")
    grid = u_centered.grid
    values = (u_centered.values - grid.nodes @ a.T) @ inv.T
    return VectorField(grid, values)


def _grad(w):
    return harmonics.tangential_gradient(w)


def _divergence(grad):
    return np.einsum("nii->n", grad)


def qv3(w, grad=None):
    """Quadratic form from the second-order expansion of the degree integral.

    (3/2) * mean(<w, (div w) x - sum_j x_j grad w^j>) with div the trace of
    the tangential Jacobian.
    """
    grid = w.grid
    g = _grad(w) if grad is None else grad
    div = _divergence(g)
    gtx = np.einsum("nj,nji->ni", grid.nodes, g)
    integrand = 1.5 * np.einsum(
        "ni,ni->n", w.values, div[:, None] * grid.nodes - gtx)
    return weighted_mean(grid, integrand)


def cubic_term(w, grad=None):
    """Volume-type cubic integral mean(<w, d1 w x d2 w>) over the frames."""
    grid = w.grid
    g = _grad(w) if grad is None else grad
    d1 = np.einsum("nij,nj->ni", g, grid.tau1)
    d2 = np.einsum("nij,nj->ni", g, grid.tau2)
    integrand = np.einsum("ni,ni->n", w.values, np.cross(d1, d2))
    return weighted_mean(grid, integrand)


def wente_check(w, grad=None):
    """Both sides of the isoperimetric bound |cubic| <= (energy/2)^(3/2).

    Returns (lhs, rhs); equality is attained at w(x) = x.
    """
    grid = w.grid
    g = _grad(w) if grad is None else grad
    lhs = abs(cubic_term(w, grad=g))
    energy = weighted_mean(grid, np.einsum("nij,nij->n", g, g))
    return lhs, (0.5 * energy) ** 1.5


def degree_identity_residual(u_centered, a):
    """|det A * (1 + qv3(w) + cubic(w)) - 1| for the remainder field w.

    Exact in the continuum for degree-1 centered maps; the residual measures
    pure discretization error and shrinks spectrally under refinement.
    """
    deg = degree(u_centered)
    if abs(deg - 1.0) > 1e-3:
        raise ValueError(
            f"identity requires a degree-1 map; computed degree {deg:.6f}")
    w = w_field(u_centered, a)
    g = _grad(w)
    val = float(np.linalg.det(a)) * (1.0 + qv3(w, grad=g) + cubic_term(w, grad=g))
    return abs(val - 1.0)


def _a_pt(grid, a):
    """Per-node matrices A P_T(x): the gradient of the linear map x -> A x."""
    ax = grid.nodes @ a.T
    return a[None, :, :] - ax[:, :, None] * grid.nodes[:, None, :]


def poincare_gap_check(u_centered, a):
    """(mean |grad u - A P_T|^2, 3 * deficit): the spectral-gap estimate.

    The bound holds for centered maps whose linear coefficient is exactly A,
    with equality approached by pure second-band perturbations.
    """
    grid = u_centered.grid
    diff = u_centered.gradient - _a_pt(grid, np.asarray(a, dtype=float))
    lhs = weighted_mean(grid, np.einsum("nij,nij->n", diff, diff))
    return lhs, 3.0 * deficit(u_centered)


_THETA_MAX = 3.0 * math.sqrt(2.0) / 4.0


def rigidity_constants(theta):
    """Closed-form constants (c1, c) of the certified estimate.

    Valid while 1/2 - theta/(3 sqrt 2) >= 1/4, i.e. theta <= 3 sqrt(2) / 4.
    At theta = 0: c1 ~ 175.05 and c ~ 122.70.
    """
    if theta < 0.0 or theta > _THETA_MAX + 1e-15:
        raise ValueError(
            f"theta={theta} outside the admissible range [0, {_THETA_MAX:.6f}]")
    t2 = theta * theta
    c1 = 6.0 * (1.0 + 0.75 * (1.0 + t2)
                + (18.0 + 4.0 * math.sqrt(27.0 * (1.0 + t2))) / math.sqrt(2.0))
    return c1, 6.0 + (2.0 / 3.0) * c1


@dataclass
class RigidityReport:
    """Full record of one rigidity analysis.

    ``ratio`` is None when the deficit is numerically zero (the estimate is
    vacuous there) and ``status`` distinguishes ok / zero-deficit /
    out-of-regime / centering-failed.  Fields that cannot be computed under
    a failure status are None.
    """

    status: str
    theta: float
    c1: float
    c: float
    degree: float
    deficit: float
    psi: MoebiusTransform | None = None
    centering_residual: float | None = None
    closeness: float | None = None
    in_gate: bool | None = None
    trivial_bound_holds: bool | None = None
    A: np.ndarray | None = None
    polar: PolarData | None = None
    w_norm_sq: float | None = None
    qv3: float | None = None
    cubic: float | None = None
    identity_residual: float | None = None
    phi: MoebiusTransform | None = None
    lhs: float | None = None
    ratio: float | None = None
    message: str = ""

    def to_json_dict(self):
        """Stable report schema; transform values are single-line strings."""
        polar = self.polar
        return {
            "status": self.status,
            "theta": self.theta,
            "c1": self.c1,
            "c": self.c,
            "degree": self.degree,
            "deficit": self.deficit,
            "lhs": self.lhs,
            "ratio": self.ratio,
            "detA": None if polar is None else polar.detA,
            "Lambda_sq": None if polar is None else polar.Lambda_sq,
            "lambda_sum": None if polar is None else polar.lambda_sum,
            "alpha": None if polar is None else list(polar.alpha),
            "qv3": self.qv3,
            "cubic": self.cubic,
            "identity_residual": self.identity_residual,
            "w_norm_sq": self.w_norm_sq,
            "closeness": self.closeness,
            "in_gate": self.in_gate,
            "trivial_bound_holds": self.trivial_bound_holds,
            "centering_residual": self.centering_residual,
            "psi": None if self.psi is None else transform_line(self.psi),
            "phi": None if self.phi is None else transform_line(self.phi),
            "message": self.message,
        }

    def to_json(self, indent=2):
        return json.dumps(self.to_json_dict(), indent=indent)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json() + "\n")


def _closeness_to_identity(u_centered):
    """mean |grad u - P_T|^2, the a-priori gate quantity."""
    grid = u_centered.grid
    pt = np.eye(3)[None, :, :] - grid.nodes[:, :, None] * grid.nodes[:, None, :]
    diff = u_centered.gradient - pt
    return weighted_mean(grid, np.einsum("nij,nij->n", diff, diff))


def analyze(u, theta=0.1):
    """Run the full pipeline on a degree-1 map and assemble the report.

    Centering failures and out-of-regime linear coefficients produce a
    report with the corresponding status and whatever fields are still
    meaningful, rather than raising.
    """
    deg = degree(u)
    if abs(deg - 1.0) > 1e-3:
        raise ValueError(
            f"analysis requires a degree-1 map; computed degree {deg:.6f}")
    c1, c = rigidity_constants(theta)
    d = deficit(u)
    report = RigidityReport(status="ok", theta=theta, c1=c1, c=c,
                            degree=deg, deficit=d)

    try:
        centering = center_map(u)
    except CenteringError as err:
        report.status = "centering-failed"
        report.message = str(err)
        return report
    report.psi = centering.psi
    report.centering_residual = float(np.linalg.norm(centering.residual))

    u_tilde = precompose(u, centering.psi)
    report.closeness = _closeness_to_identity(u_tilde)
    report.in_gate = bool(report.closeness <= theta * theta)
    if report.in_gate:
        report.trivial_bound_holds = bool(d <= 1.0 + theta * theta + 1e-9)

    a = linear_coefficient(u_tilde)
    report.A = a
    try:
        polar = polar_decompose(a)
        report.polar = polar
        r0 = polar.R0
    except OutOfRegimeError as err:
        report.status = "out-of-regime"
        report.message = str(err)
        r0 = _polar_rotation(a)

    try:
        w = w_field(u_tilde, a)
        g = _grad(w)
        report.w_norm_sq = weighted_mean(
            u.grid, np.einsum("nij,nij->n", g, g))
        report.qv3 = qv3(w, grad=g)
        report.cubic = cubic_term(w, grad=g)
        val = float(np.linalg.det(a)) * (1.0 + report.qv3 + report.cubic)
        report.identity_residual = abs(val - 1.0)
    except OutOfRegimeError as err:
        if report.status == "ok":
            report.status = "out-of-regime"
            report.message = str(err)

    report.phi = compose(pure_rotation(r0), inverse(centering.psi))
    report.lhs = gradient_distance_sq(u, as_map(report.phi, u.grid))
    if d > _ZERO_DEFICIT:
        report.ratio = report.lhs / d
    elif report.status == "ok":
        report.status = "zero-deficit"
    return report


def best_moebius(u, initial, passes=3, step=0.05):
    """Locally tighten the candidate by derivative-free coordinate descent.

    Six parameters: three rotation increments, two chart coordinates of xi,
    and log lam (multiplicative updates).  Each coordinate is improved by a
    quadratic fit through three samples; moves are only accepted when the
    gradient distance strictly decreases, so the result is never worse than
    the initial transform.
    """
    def objective(t):
        return gradient_distance_sq(u, as_map(t, u.grid))

    def perturb(t, coord, delta):
        if coord < 3:
            vec = np.zeros(3)
            vec[coord] = delta
            return MoebiusTransform(
                t.rotation @ rotation_from_rotvec(vec), t.xi, t.lam)
        if coord < 5:
            t1, t2 = _tangent_basis(t.xi)
            xi = t.xi + delta * (t1 if coord == 3 else t2)
            return MoebiusTransform(t.rotation, xi / np.linalg.norm(xi), t.lam)
        return MoebiusTransform(t.rotation, t.xi, t.lam * math.exp(delta))

    current, f_current = initial, objective(initial)
    h = step
    for _ in range(passes):
        improved_any = False
        for coord in range(6):
            f_minus = objective(perturb(current, coord, -h))
            f_plus = objective(perturb(current, coord, +h))
            denom = f_minus - 2.0 * f_current + f_plus
            if denom > 0.0:
                delta = 0.5 * h * (f_minus - f_plus) / denom
                delta = float(np.clip(delta, -2.0 * h, 2.0 * h))
            else:
                delta = -h if f_minus < f_plus else h
            candidate = perturb(current, coord, delta)
            f_candidate = objective(candidate)
            if f_candidate < f_current:
                current, f_current = candidate, f_candidate
                improved_any = True
            elif f_minus < f_current:
                current, f_current = perturb(current, coord, -h), f_minus
                improved_any = True
            elif f_plus < f_current:
                current, f_current = perturb(current, coord, +h), f_plus
                improved_any = True
        if not improved_any:
            h *= 0.5
    return current
