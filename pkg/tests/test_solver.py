import math

import numpy as np
import pytest

from bubble_lab.ansatz import build_ansatz
from bubble_lab.bubbles import BubbleParams
from bubble_lab.curvature import BoundaryAngle, CurvatureField
from bubble_lab.errors import NewtonDiverged
from bubble_lab.grid import build_grid
from bubble_lab.solver import (LinearizedOperator, ProjectedSolver,
                               SolutionField, _ProblemCache, _Workspace,
                               ansatz_on_grid, assemble_linearization,
                               constraint_data, extract_blowup_point,
                               mass_identity, newton_solve,
                               nonlinear_projected_solve,
                               projected_linear_solve, trace_flatness)

TWO_PI = 2.0 * math.pi
MU = 1.0 + math.sqrt(2.0)


def radial_solution(grid, eps):
    """Closed-form rotationally symmetric solution for K = kappa = 1."""
    prof = np.log(2.0 * MU / (eps * (MU**2 + grid.r**2)))
    return np.broadcast_to(prof[:, None], grid.shape).copy()


def mobius_solution(grid, eps, rho, psi=0.0):
    """Exact concentrating solutions for constant curvature data.

    The constant-curvature problem is invariant under disc automorphisms, so
    composing the radial solution with a Moebius map centered toward the
    boundary point at angle psi yields an exact solution concentrating there
    as rho -> 1.
    """
    xy = grid.nodes_xy()
    w = xy[..., 0] + 1j * (xy[..., 1] - 1.0)
    a = rho * -1j * np.exp(1j * 0.0) if psi == 0.0 else \
        rho * (np.sin(psi) - 1j * np.cos(psi))
    M = (w - a) / (1.0 - np.conj(a) * w)
    return (math.log(2.0 * MU / eps) - np.log(MU**2 + np.abs(M) ** 2)
            + math.log(1.0 - rho**2) - 2.0 * np.log(np.abs(1.0 - np.conj(a) * w)))


def test_exact_radial_residual(unit_field, grid_base):
    u = radial_solution(grid_base, 0.5).astype(np.longdouble)
    cache = _ProblemCache(grid_base, unit_field, 0.5)
    assert float(np.abs(cache.residual(u)).max()) <= 1e-9


def test_mobius_solutions_have_small_residual(unit_field, grid_base):
    cache = _ProblemCache(grid_base, unit_field, 0.05)
    u = mobius_solution(grid_base, 0.05, 1.0 - 0.25)
    assert float(np.abs(cache.residual(u.astype(np.longdouble))).max()) <= 1e-5


def test_plain_newton_radial(unit_field, grid_base):
    u = newton_solve(grid_base, unit_field, 0.5, np.zeros(grid_base.shape),
                     tol=1e-9, anchor=None)
    assert u.residual <= 1e-9
    assert u.iterations <= 8
    exact = radial_solution(grid_base, 0.5)
    assert np.abs(u.values - exact).max() <= 1e-6
    mass = mass_identity(u, unit_field)
    assert abs(mass - TWO_PI) / TWO_PI <= 1e-10
    assert trace_flatness(u)


def test_anchored_newton_constant_curvature(unit_field, grid_base):
    p = BubbleParams(BoundaryAngle(0.0), 1.0, 0.05)
    seed = ansatz_on_grid(build_ansatz(unit_field, p, n_modes=512), grid_base)
    u = newton_solve(grid_base, unit_field, 0.05, seed, tol=1e-9, anchor=p,
                     n_modes=512)
    assert u.residual <= 1e-8
    assert abs(u.multiplier) <= 1e-10          # symmetric anchor
    assert not trace_flatness(u)               # genuinely concentrated
    mass = mass_identity(u, unit_field)
    assert abs(mass - TWO_PI) / TWO_PI <= 1e-4
    blow = extract_blowup_point(u)
    assert blow.distance_to(0.0) <= 2 * np.pi / grid_base.n_theta


def test_anchored_newton_seed_basin(unit_field, grid_base):
    """A strongly perturbed seed lands on the same anchored solution."""
    p = BubbleParams(BoundaryAngle(0.0), 1.0, 0.05)
    seed = ansatz_on_grid(build_ansatz(unit_field, p, n_modes=512), grid_base)
    u1 = newton_solve(grid_base, unit_field, 0.05, seed, tol=1e-9, anchor=p,
                      n_modes=512)
    rng = np.random.default_rng(7)
    u2 = newton_solve(grid_base, unit_field, 0.05,
                      seed + 0.3 * rng.standard_normal(grid_base.shape),
                      tol=1e-9, anchor=p, n_modes=512)
    assert np.abs(u1.values - u2.values).max() <= 1e-7


def test_grid_validation_invariants_on_solution(unit_field, grid_base):
    """Boundary trace of a solution field is its r = 1 ring."""
    u = newton_solve(grid_base, unit_field, 0.5, np.zeros(grid_base.shape),
                     tol=1e-9, anchor=None)
    assert np.abs(u.boundary_trace - u.values[0]).max() == 0.0
    assert np.abs(grid_base.trace_interpolated(u.values)
                  - u.boundary_trace).max() <= 1e-9


def test_mass_refinement_order(unit_field, grid_base):
    """Mass quadrature error of the exact concentrated solution drops >= 4x
    per grid doubling."""
    errs = []
    for (nt, nr) in [(128, 64), (256, 128)]:
        g = grid_base if (nt, nr) == (128, 64) else build_grid(nt, nr)
        u = SolutionField(values=mobius_solution(g, 0.05, 0.87),
                          epsilon=0.05, grid=g)
        errs.append(abs(mass_identity(u, unit_field) - TWO_PI))
    assert errs[0] <= 1e-4 * TWO_PI
    assert errs[0] / max(errs[1], 1e-16) >= 4.0


def test_linearization_profiles(unit_field, grid_scan):
    eps = 0.05
    p = BubbleParams(BoundaryAngle(0.0), 1.0, eps)
    a = build_ansatz(unit_field, p, n_modes=384)
    op = assemble_linearization(a, unit_field, eps, grid=grid_scan)
    assert np.all(op.W1 > 0) and np.all(op.W2 > 0)
    D = 1.0
    # at the blown-up concentration point the interior coefficient approaches
    # 8 lam^2 / (lam^2 (1 + D^2))^2 and the boundary one 2 lam D / (lam^2(1+D^2))
    y = grid_scan.nodes_xy() / eps
    xi_p = p.theta_xi.point() / eps
    n_xi = p.theta_xi.normal()
    rho2 = ((y[..., 0] - xi_p[0] - D * n_xi[0]) ** 2
            + (y[..., 1] - xi_p[1] - D * n_xi[1]) ** 2)
    w1_model = 8.0 / (1.0 + rho2) ** 2
    near = rho2 < 25.0
    ratio = op.W1[near] / w1_model[near]
    assert np.abs(ratio - 1.0).max() <= 0.15          # 1 + O(eps|y|) + O(eps^a)
    rho2_b = ((y[0, :, 0] - xi_p[0] - D * n_xi[0]) ** 2
              + (y[0, :, 1] - xi_p[1] - D * n_xi[1]) ** 2)
    w2_model = 2.0 * D / (1.0 + rho2_b)
    near_b = rho2_b < 25.0
    ratio_b = op.W2[near_b] / w2_model[near_b]
    assert np.abs(ratio_b - 1.0).max() <= 0.15


def test_linearization_lambda_rescaling(unit_field, grid_scan):
    """Doubling the dilation rescales the coefficient profiles per the
    closed form of the bubble."""
    eps = 0.05
    vals = {}
    for lam in (1.0, 2.0):
        p = BubbleParams(BoundaryAngle(0.0), lam, eps)
        a = build_ansatz(unit_field, p, n_modes=384)
        op = assemble_linearization(a, unit_field, eps, grid=grid_scan)
        vals[lam] = op
    # peak of W1 scales like 1 / lam^2 for fixed D
    p1 = vals[1.0].W1.max()
    p2 = vals[2.0].W1.max()
    assert p1 / p2 == pytest.approx(4.0, rel=0.2)


def test_projected_linear_solve_basics(unit_field, grid_scan):
    eps = 0.05
    p = BubbleParams(BoundaryAngle(0.0), 1.0, eps)
    a = build_ansatz(unit_field, p, n_modes=384)
    op = assemble_linearization(a, unit_field, eps, grid=grid_scan)
    zero = np.zeros(grid_scan.shape)
    res0 = projected_linear_solve(op, zero, np.zeros(grid_scan.n_theta))
    assert res0.phi_norm == 0.0 and res0.c1 == 0.0
    # forcing along the multiplier column is absorbed with c1 = -1
    B, gw = constraint_data(grid_scan, unit_field, p, 1)
    res1 = projected_linear_solve(op, B, np.zeros(grid_scan.n_theta))
    assert res1.c1 == pytest.approx(-1.0, abs=1e-8)
    assert res1.phi_norm <= 1e-8
    assert res1.orthogonality_residual <= 1e-9


def test_projected_linear_solve_additivity(unit_field, grid_scan):
    eps = 0.05
    p = BubbleParams(BoundaryAngle(0.0), 1.0, eps)
    a = build_ansatz(unit_field, p, n_modes=384)
    op = assemble_linearization(a, unit_field, eps, grid=grid_scan)
    solver = ProjectedSolver(op, p)
    rng = np.random.default_rng(5)
    xy = grid_scan.nodes_xy()
    f1 = np.exp(-8 * ((xy[..., 0] - 0.2) ** 2 + (xy[..., 1] - 0.9) ** 2))
    f2 = np.sin(3 * xy[..., 0]) * xy[..., 1]
    h1 = np.cos(2 * grid_scan.theta)
    h2 = rng.standard_normal(grid_scan.n_theta) * 0.0 + np.sin(grid_scan.theta)
    ra = solver.solve(f1, h1)
    rb = solver.solve(f2, h2)
    rab = solver.solve(f1 + f2, h1 + h2)
    assert np.abs(rab.phi.values - ra.phi.values - rb.phi.values).max() <= 1e-9
    assert rab.c1 == pytest.approx(ra.c1 + rb.c1, abs=1e-12)


def test_projected_stability_constant(unit_field):
    """|phi| <= C(||f|| + ||h||) with C stable across eps."""
    from bubble_lab.bubbles import weighted_norms
    consts = []
    for eps in (0.1, 0.05):
        g = build_grid(128, 48)
        p = BubbleParams(BoundaryAngle(0.0), 1.0, eps)
        a = build_ansatz(unit_field, p, n_modes=384)
        op = assemble_linearization(a, unit_field, eps, grid=g)
        solver = ProjectedSolver(op, p)
        xy = g.nodes_xy()
        y = xy / eps
        xi_p = p.theta_xi.point() / eps
        f = np.exp(-((xy[..., 0]) ** 2 + (xy[..., 1] - 1) ** 2))
        h = np.cos(g.theta)
        res = solver.solve(f, h)
        rep = weighted_norms(y.reshape(-1, 2), f.ravel(),
                             y[0], h, xi_p)
        consts.append(res.phi_norm / (rep.interior_norm + rep.boundary_norm))
    assert max(consts) / min(consts) <= 3.0


def test_nonlinear_projected_solve_constant(unit_field, grid_scan):
    p = BubbleParams(BoundaryAngle(0.0), 1.0, 0.05)
    res, a = nonlinear_projected_solve(grid_scan, unit_field, p, tol=1e-10,
                                       n_modes=384)
    assert res.iterations <= 10
    assert abs(res.c1) <= 1e-12                      # symmetry forces c1 = 0
    assert res.phi_norm <= 5.0 * 0.05**0.9
    assert res.orthogonality_residual <= 1e-9


def test_nonlinear_projected_decay(unit_field, grid_base):
    """|phi| + |c1| = O(eps^alpha) over the eps sweep."""
    sizes = []
    eps_list = [0.1, 0.05]
    for eps in eps_list:
        p = BubbleParams(BoundaryAngle(0.0), 1.0, eps)
        res, _ = nonlinear_projected_solve(grid_base, unit_field, p,
                                           tol=1e-10, n_modes=512)
        sizes.append(res.phi_norm + abs(res.c1))
    assert sizes[1] <= sizes[0]
    assert sizes[1] <= 5.0 * 0.05**0.9


def test_newton_from_projected_solution(unit_field, grid_base):
    """Seeding the full solve with V + phi costs few extra iterations."""
    p = BubbleParams(BoundaryAngle(0.0), 1.0, 0.05)
    res, a = nonlinear_projected_solve(grid_base, unit_field, p, tol=1e-10,
                                       n_modes=512)
    seed = res.solution
    u = newton_solve(grid_base, unit_field, 0.05, seed, tol=1e-9, anchor=p,
                     n_modes=512)
    assert u.residual <= 1e-8
    # consistency of the two solution paths at the anchor scale
    base = ansatz_on_grid(a, grid_base)
    assert np.abs(res.solution.values - base).max() <= 0.5


def test_extract_blowup_quadratic_refinement(unit_field, grid_base):
    p = BubbleParams(BoundaryAngle(1.2), 1.0, 0.05)
    a = build_ansatz(unit_field, p, n_modes=512)
    u = SolutionField(values=ansatz_on_grid(a, grid_base), epsilon=0.05,
                      grid=grid_base)
    blow = extract_blowup_point(u)
    assert blow.distance_to(1.2) <= 2 * np.pi / grid_base.n_theta
    assert not trace_flatness(u)


def test_anchored_diverges_when_unresolvable(cos_field):
    """Strongly varying data at coarse resolution has no genuine solution at
    the anchored scale window; the solve reports that instead of stalling."""
    g = build_grid(64, 48)
    p = BubbleParams(BoundaryAngle(0.0), 1.0, 0.05)
    seed = ansatz_on_grid(build_ansatz(cos_field, p, n_modes=256), g)
    with pytest.raises(NewtonDiverged):
        newton_solve(g, cos_field, 0.05, seed, tol=1e-9, anchor=p,
                     n_modes=256, max_iter=40)
