"""Closed-form bubbles, their kernels, and the weighted residual norms.

All residual checks here use hand-differentiated formulas; finite differences
appear only as a secondary oracle in the tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .curvature import BoundaryAngle, CurvatureField, eval_reduced


@dataclass(frozen=True)
class HalfPlaneBubbleParams:
    """Parameters of the explicit half-plane solution.

    a, b are the interior/boundary curvature constants, lam the dilation,
    s the horizontal translation.
    """

    a: float
    b: float
    lam: float
    s: float = 0.0

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0 or self.lam <= 0:
            raise ValueError("a, b, lam must all be positive")

    @property
    def t(self) -> float:
        """Vertical offset ratio b / sqrt(a)."""
        return self.b / math.sqrt(self.a)


@dataclass(frozen=True)
class BubbleParams:
    """Concentration data: boundary angle, dilation, singular parameter."""

    theta_xi: BoundaryAngle
    lam: float
    epsilon: float

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")


def _q(p: HalfPlaneBubbleParams, x1, x2):
    """Denominator lam^2 + (x1-s)^2 + (x2 + t*lam)^2."""
    return p.lam**2 + (x1 - p.s) ** 2 + (x2 + p.t * p.lam) ** 2


def eval_half_plane_bubble(p: HalfPlaneBubbleParams, x):
    """ln( 2*lam / (sqrt(a) * (lam^2 + (x1-s)^2 + (x2 + (b/sqrt a) lam)^2)) )."""
    x = np.asarray(x, dtype=float)
    return math.log(2.0 * p.lam / math.sqrt(p.a)) - np.log(_q(p, x[..., 0], x[..., 1]))


def half_plane_bubble_gradient(p: HalfPlaneBubbleParams, x):
    x = np.asarray(x, dtype=float)
    q = _q(p, x[..., 0], x[..., 1])
    g1 = -2.0 * (x[..., 0] - p.s) / q
    g2 = -2.0 * (x[..., 1] + p.t * p.lam) / q
    return np.stack([g1, g2], axis=-1)


def half_plane_bubble_laplacian(p: HalfPlaneBubbleParams, x):
    x = np.asarray(x, dtype=float)
    q = _q(p, x[..., 0], x[..., 1])
    return -4.0 * p.lam**2 / q**2


def half_plane_residual(p: HalfPlaneBubbleParams, interior_points, boundary_x1):
    """Max-|residual| of the half-plane problem at the given samples.

    Interior: -Lap(U) - a e^{2U}; boundary (x2 = 0, outward normal -e2):
    dU/dn - b e^{U}.  Exact derivatives, so the result is roundoff-level.
    """
    pts = np.asarray(interior_points, dtype=float)
    u = eval_half_plane_bubble(p, pts)
    res_int = -half_plane_bubble_laplacian(p, pts) - p.a * np.exp(2.0 * u)
    x1 = np.asarray(boundary_x1, dtype=float)
    bpts = np.stack([x1, np.zeros_like(x1)], axis=-1)
    ub = eval_half_plane_bubble(p, bpts)
    dn = -half_plane_bubble_gradient(p, bpts)[..., 1]
    res_bdy = dn - p.b * np.exp(ub)
    return max(np.abs(res_int).max(), np.abs(res_bdy).max())


# -- disc bubble -------------------------------------------------------------


def disc_bubble_center(p: BubbleParams, field: CurvatureField) -> np.ndarray:
    """Shifted center xi + D*lam*eps*n(xi); lies outside the closed disc."""
    red = eval_reduced(field, p.theta_xi)
    return p.theta_xi.point() + red.D_ratio * p.lam * p.epsilon * p.theta_xi.normal()


def eval_disc_bubble(p: BubbleParams, field: CurvatureField, x):
    """First approximation ln( 2 lam / (sqrt(K(xi)) (lam^2 eps^2 + |x - c|^2)) )."""
    x = np.asarray(x, dtype=float)
    c = disc_bubble_center(p, field)
    K_xi = float(field.eval_K(p.theta_xi.point()))
    mu2 = (p.lam * p.epsilon) ** 2
    d2 = (x[..., 0] - c[0]) ** 2 + (x[..., 1] - c[1]) ** 2
    return math.log(2.0 * p.lam / math.sqrt(K_xi)) - np.log(mu2 + d2)


def disc_bubble_gradient(p: BubbleParams, field: CurvatureField, x):
    x = np.asarray(x, dtype=float)
    c = disc_bubble_center(p, field)
    mu2 = (p.lam * p.epsilon) ** 2
    dx = x[..., 0] - c[0]
    dy = x[..., 1] - c[1]
    q = mu2 + dx * dx + dy * dy
    return np.stack([-2.0 * dx / q, -2.0 * dy / q], axis=-1)


def disc_bubble_laplacian(p: BubbleParams, field: CurvatureField, x):
    x = np.asarray(x, dtype=float)
    c = disc_bubble_center(p, field)
    mu2 = (p.lam * p.epsilon) ** 2
    d2 = (x[..., 0] - c[0]) ** 2 + (x[..., 1] - c[1]) ** 2
    return -4.0 * mu2 / (mu2 + d2) ** 2


def disc_bubble_interior_residual(p: BubbleParams, field: CurvatureField, x):
    """-Lap(U0) - eps^2 K(xi) e^{2 U0}: identically zero for the exact bubble."""
    K_xi = float(field.eval_K(p.theta_xi.point()))
    u = eval_disc_bubble(p, field, x)
    return -disc_bubble_laplacian(p, field, x) - p.epsilon**2 * K_xi * np.exp(2.0 * u)


# -- kernels of the linearized half-plane operator ---------------------------


def eval_kernel(index: int, p: HalfPlaneBubbleParams, x):
    """Bounded kernel functions of the linearized problem (s = 0).

    index 0: 1/(2 lam) - (lam + t (x2 + t lam)) / Q   (dilation-type, even)
    index 1: x1 / Q                                    (translation, odd)
    """
    if p.s != 0.0:
        raise ValueError("kernels are defined for the centered bubble (s = 0)")
    x = np.asarray(x, dtype=float)
    q = _q(p, x[..., 0], x[..., 1])
    if index == 1:
        return x[..., 0] / q
    if index == 0:
        x2t = x[..., 1] + p.t * p.lam
        return 1.0 / (2.0 * p.lam) - (p.lam + p.t * x2t) / q
    raise ValueError("kernel index must be 0 or 1")


def _kernel_laplacian(index: int, p: HalfPlaneBubbleParams, x):
    x = np.asarray(x, dtype=float)
    q = _q(p, x[..., 0], x[..., 1])
    if index == 1:
        return -8.0 * p.lam**2 * x[..., 0] / q**3
    x2t = x[..., 1] + p.t * p.lam
    return -(p.lam + p.t * x2t) * (4.0 * q - 8.0 * p.lam**2) / q**3 + 4.0 * p.t * x2t / q**2


def _kernel_dx2(index: int, p: HalfPlaneBubbleParams, x):
    x = np.asarray(x, dtype=float)
    q = _q(p, x[..., 0], x[..., 1])
    x2t = x[..., 1] + p.t * p.lam
    if index == 1:
        return -2.0 * x[..., 0] * x2t / q**2
    return -(p.t * q - (p.lam + p.t * x2t) * 2.0 * x2t) / q**2


def linearized_potential(p: HalfPlaneBubbleParams, x):
    """Interior coefficient 2 a e^{2 U0} = 8 lam^2 / Q^2 of the linearization."""
    x = np.asarray(x, dtype=float)
    return 8.0 * p.lam**2 / _q(p, x[..., 0], x[..., 1]) ** 2


def linearized_boundary_coefficient(p: HalfPlaneBubbleParams, x1):
    """Boundary coefficient b e^{U0}|_{x2=0} = 2 b lam / (sqrt(a) Q0)."""
    x1 = np.asarray(x1, dtype=float)
    q0 = p.lam**2 + (x1 - p.s) ** 2 + (p.t * p.lam) ** 2
    return 2.0 * p.b * p.lam / (math.sqrt(p.a) * q0)


def kernel_annihilation(index: int, p: HalfPlaneBubbleParams,
                        interior_points, boundary_x1,
                        func=None, func_lap=None, func_dx2=None):
    """Max-|residual| of the linearized system applied to a kernel candidate.

    Interior: Lap(z) + 2 a e^{2U0} z; boundary: dz/dn - b e^{U0} z with
    dz/dn = -dz/dx2 on x2 = 0.  Defaults to the built-in kernels; pass
    (func, func_lap, func_dx2) to probe an arbitrary candidate.
    """
    pts = np.asarray(interior_points, dtype=float)
    x1 = np.asarray(boundary_x1, dtype=float)
    bpts = np.stack([x1, np.zeros_like(x1)], axis=-1)
    if func is None:
        func = lambda q: eval_kernel(index, p, q)                 # noqa: E731
        func_lap = lambda q: _kernel_laplacian(index, p, q)       # noqa: E731
        func_dx2 = lambda q: _kernel_dx2(index, p, q)             # noqa: E731
    res_int = func_lap(pts) + linearized_potential(p, pts) * func(pts)
    res_bdy = -func_dx2(bpts) - linearized_boundary_coefficient(p, x1) * func(bpts)
    return max(np.abs(res_int).max(), np.abs(res_bdy).max())


# -- weighted norms ----------------------------------------------------------


def interior_weight(r):
    """1 + r^2 ln^3(1 + r); equals 1 at r = 0."""
    r = np.asarray(r, dtype=float)
    return 1.0 + r**2 * np.log1p(r) ** 3


def boundary_weight(r):
    """1 + r ln^3(1 + r); equals 1 at r = 0."""
    r = np.asarray(r, dtype=float)
    return 1.0 + r * np.log1p(r) ** 3


@dataclass(frozen=True)
class WeightedNormReport:
    interior_norm: float
    boundary_norm: float
    alpha_used: float


def weighted_norms(interior_points, f_values, boundary_points, h_values,
                   xi_prime, alpha_used: float = 0.9) -> WeightedNormReport:
    """Discrete suprema of |f| and |h| against the polynomial-log weights.

    Points are in the blown-up variables; distances are measured from
    xi_prime.  alpha_used tags the report for downstream decay fits.
    """
    xi_prime = np.asarray(xi_prime, dtype=float)
    if len(np.asarray(f_values)) > 0:
        pts = np.asarray(interior_points, dtype=float)
        r = np.hypot(pts[..., 0] - xi_prime[0], pts[..., 1] - xi_prime[1])
        ni = float(np.max(np.abs(np.asarray(f_values)) * interior_weight(r)))
    else:
        ni = 0.0
    if len(np.asarray(h_values)) > 0:
        bpts = np.asarray(boundary_points, dtype=float)
        rb = np.hypot(bpts[..., 0] - xi_prime[0], bpts[..., 1] - xi_prime[1])
        nb = float(np.max(np.abs(np.asarray(h_values)) * boundary_weight(rb)))
    else:
        nb = 0.0
    return WeightedNormReport(interior_norm=ni, boundary_norm=nb, alpha_used=alpha_used)
