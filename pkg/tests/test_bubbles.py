import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bubble_lab.bubbles import (BubbleParams, HalfPlaneBubbleParams,
                                boundary_weight, disc_bubble_center,
                                disc_bubble_interior_residual,
                                eval_disc_bubble, eval_half_plane_bubble,
                                eval_kernel, half_plane_bubble_laplacian,
                                half_plane_residual, interior_weight,
                                kernel_annihilation, weighted_norms)
from bubble_lab.curvature import BoundaryAngle, CurvatureField


def _samples(seed=0, n=100):
    rng = np.random.default_rng(seed)
    pts = np.column_stack([rng.uniform(-5, 5, n), rng.uniform(0, 5, n)])
    return pts, rng.uniform(-5, 5, n)


def test_half_plane_values():
    p = HalfPlaneBubbleParams(1.0, 1.0, 1.0, 0.0)
    assert eval_half_plane_bubble(p, np.array([0.0, 0.0])) == pytest.approx(0.0)
    p2 = HalfPlaneBubbleParams(4.0, 2.0, 2.0, 1.0)
    # at (1, 0): Q = 4 + 0 + (2/2*2)^2 = 8, value ln(4 / (2*8)) = ln(1/4)
    assert eval_half_plane_bubble(p2, np.array([1.0, 0.0])) == \
        pytest.approx(math.log(0.25))


def test_half_plane_far_field_decay():
    p = HalfPlaneBubbleParams(1.0, 1.0, 1.0, 0.0)
    v3 = eval_half_plane_bubble(p, np.array([1e3, 0.0]))
    v4 = eval_half_plane_bubble(p, np.array([1e4, 0.0]))
    # leading behavior -2 ln|x|: bounded offset, exact decrement per decade
    assert abs(v3 + 2.0 * math.log(1e3)) <= 1.0
    assert v3 - v4 == pytest.approx(2.0 * math.log(10.0), abs=1e-3)


@given(st.floats(0.25, 4.0), st.floats(0.25, 4.0), st.floats(0.25, 4.0),
       st.floats(-3.0, 3.0))
@settings(max_examples=60, deadline=None)
def test_half_plane_residual_exact(a, b, lam, s):
    pts, bx = _samples()
    p = HalfPlaneBubbleParams(a, b, lam, s)
    assert half_plane_residual(p, pts, bx) <= 1e-12


def test_half_plane_fd_oracle():
    """Interior Laplacian against 4th-order finite differences."""
    p = HalfPlaneBubbleParams(3.0, 1.0, 0.5, 0.2)
    rng = np.random.default_rng(1)
    pts = np.column_stack([rng.uniform(-3, 3, 40), rng.uniform(0.5, 4, 40)])
    h = 1e-4
    lap_fd = np.zeros(len(pts))
    for axis in range(2):
        for k, w in [(-2, -1.0), (-1, 16.0), (0, -30.0), (1, 16.0), (2, -1.0)]:
            q = pts.copy()
            q[:, axis] += k * h
            lap_fd += w * eval_half_plane_bubble(p, q)
    lap_fd /= 12.0 * h * h
    lap_exact = half_plane_bubble_laplacian(p, pts)
    assert np.abs(lap_fd - lap_exact).max() <= 1e-6 * max(
        1.0, np.abs(lap_exact).max())


def test_disc_bubble_values(unit_field):
    p = BubbleParams(BoundaryAngle(0.0), 1.0, 0.1)
    v = eval_disc_bubble(p, unit_field, np.array([0.0, 0.0]))
    assert v == pytest.approx(math.log(100.0))      # ln(2 / (0.01 + 0.01))
    # diametrically opposite point: |x - xi| = 2 dominates
    v2 = eval_disc_bubble(p, unit_field, np.array([0.0, 2.0]))
    assert v2 == pytest.approx(math.log(0.5), abs=0.2)


def test_disc_bubble_center_outside(unit_field):
    for th in [0.0, 1.0, 4.0]:
        p = BubbleParams(BoundaryAngle(th), 1.0, 0.05)
        c = disc_bubble_center(p, unit_field)
        assert np.hypot(c[0], c[1] - 1.0) > 1.0


def test_disc_bubble_rotation_invariance(unit_field):
    rng = np.random.default_rng(2)
    beta = 0.9
    th = np.linspace(0, 2 * np.pi, 7)
    r = rng.uniform(0, 1, 7)
    x = np.stack([r * np.sin(th), 1 - r * np.cos(th)], axis=-1)
    x_rot = np.stack([r * np.sin(th + beta), 1 - r * np.cos(th + beta)], axis=-1)
    p0 = BubbleParams(BoundaryAngle(0.4), 1.0, 0.1)
    p1 = BubbleParams(BoundaryAngle(0.4 + beta), 1.0, 0.1)
    assert np.allclose(eval_disc_bubble(p0, unit_field, x),
                       eval_disc_bubble(p1, unit_field, x_rot), atol=1e-12)


@given(st.floats(0.25, 4.0), st.floats(0.25, 4.0), st.floats(0.02, 0.2),
       st.floats(0, 2 * math.pi))
@settings(max_examples=40, deadline=None)
def test_disc_bubble_interior_identity(K0, kap0, eps, th):
    """-Lap(U0) = eps^2 K(xi) e^{2 U0} exactly (hand derivatives)."""
    f = CurvatureField([[K0]], kap0)
    p = BubbleParams(BoundaryAngle(th), 1.0, eps)
    rng = np.random.default_rng(0)
    rr = rng.uniform(0, 1, 50)
    tt = rng.uniform(0, 2 * np.pi, 50)
    x = np.stack([rr * np.sin(tt), 1 - rr * np.cos(tt)], axis=-1)
    res = disc_bubble_interior_residual(p, f, x)
    u = eval_disc_bubble(p, f, x)
    scale = (eps**2 * K0 * np.exp(2 * u)).max()
    assert np.abs(res).max() <= 1e-11 * max(1.0, scale)


def test_kernel_values():
    p = HalfPlaneBubbleParams(1.0, 1.0, 1.0)
    # z1 vanishes on the symmetry axis
    x = np.column_stack([np.zeros(5), np.linspace(0, 4, 5)])
    assert np.abs(eval_kernel(1, p, x)).max() == 0.0
    # z0 at the origin: 1/2 - 2/2 = -1/2
    assert eval_kernel(0, p, np.array([0.0, 0.0])) == pytest.approx(-0.5)


def test_kernel_parity():
    p = HalfPlaneBubbleParams(2.0, 0.5, 1.5)
    rng = np.random.default_rng(3)
    x = np.column_stack([rng.uniform(0.1, 4, 50), rng.uniform(0, 4, 50)])
    x_ref = x * np.array([-1.0, 1.0])
    assert np.allclose(eval_kernel(1, p, x), -eval_kernel(1, p, x_ref))
    assert np.allclose(eval_kernel(0, p, x), eval_kernel(0, p, x_ref))


def test_kernel_asymptotics():
    p = HalfPlaneBubbleParams(1.0, 2.0, 1.0)
    rng = np.random.default_rng(4)
    th = rng.uniform(0, np.pi, 60)
    R = rng.uniform(100, 1000, 60)
    x = np.column_stack([R * np.cos(th), R * np.sin(th)])
    z0 = eval_kernel(0, p, x)
    assert np.all(np.abs(z0 - 1.0 / (2.0 * p.lam)) <= 10.0 / R)
    z1 = eval_kernel(1, p, x)
    assert np.all(np.abs(z1) <= 10.0 / R)


def test_kernel_annihilation_sweep():
    pts, bx = _samples(5, 200)
    worst = 0.0
    for a in [0.5, 1.0, 2.0]:
        for b in [0.5, 1.0, 2.0]:
            for lam in [0.5, 1.0, 2.0]:
                p = HalfPlaneBubbleParams(a, b, lam)
                worst = max(worst, kernel_annihilation(0, p, pts, bx),
                            kernel_annihilation(1, p, pts, bx))
    assert worst <= 1e-11


def test_kernel_negative_control():
    """A smooth non-kernel bump must leave a visible residual."""
    p = HalfPlaneBubbleParams(1.0, 1.0, 1.0)
    pts, bx = _samples(6, 200)
    bump = lambda q: np.exp(-(q[..., 0]**2 + (q[..., 1] - 1.0)**2))  # noqa: E731
    bump_lap = lambda q: bump(q) * (4.0 * (q[..., 0]**2                 # noqa: E731
                                           + (q[..., 1] - 1.0)**2) - 4.0)
    bump_dx2 = lambda q: bump(q) * (-2.0 * (q[..., 1] - 1.0))           # noqa: E731
    res = kernel_annihilation(0, p, pts, bx, func=bump, func_lap=bump_lap,
                              func_dx2=bump_dx2)
    assert res >= 1e-2


def test_weight_normalization():
    assert interior_weight(0.0) == 1.0
    assert boundary_weight(0.0) == 1.0


def test_weighted_norms_zero_and_constant():
    pts = np.column_stack([np.linspace(0, 50, 200), np.zeros(200)])
    rep = weighted_norms(pts, np.zeros(200), pts, np.zeros(200),
                         np.zeros(2))
    assert rep.interior_norm == 0.0 and rep.boundary_norm == 0.0
    c = 0.3
    rep = weighted_norms(pts, np.zeros(200), pts, np.full(200, c), np.zeros(2))
    r_max = 50.0
    assert rep.boundary_norm == pytest.approx(c * boundary_weight(r_max))


def test_weighted_norm_scan_oracle():
    """f = 1/(1+r^4): norm equals the dense 1-D scan of the weighted profile."""
    r = np.logspace(-3, 3, 4001)
    pts = np.column_stack([r, np.zeros_like(r)])
    f = 1.0 / (1.0 + r**4)
    rep = weighted_norms(pts, f, pts[:1], f[:1], np.zeros(2))
    oracle = float(np.max(interior_weight(r) / (1.0 + r**4)))
    assert rep.interior_norm == pytest.approx(oracle, rel=1e-12)
    assert np.isfinite(rep.interior_norm)
