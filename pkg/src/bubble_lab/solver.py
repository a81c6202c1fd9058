"""Nonlinear disc solver: damped Newton with soft-mode anchors, projected
linear/nonlinear solves with the translation-kernel multiplier, mass identity,
and blow-up location.

All solves operate in the physical disc variables; the blown-up problem is
reached by exact rescalings (interior forcing eps^-2, boundary forcing eps^-1,
multiplier eps^2).  Newton iterates are held in extended precision so the
certified residual is not limited by float64 nodal roundoff.

The linearization at a concentrated state has two soft directions, the cutoff
images of the half-plane kernel pair (dilation-type and translation).  For
constant curvature data the dilation direction is exactly neutral in the
continuum (the solution set is invariant under disc automorphisms), so the
discrete problem only pins it at truncation level.  newton_solve therefore
borders both kernels and slides the dilation-phase target until its
multiplier is below tolerance; the translation multiplier is the reduction
quantity c1 and vanishes exactly at solution phases.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .ansatz import AnsatzField, build_ansatz
from .bubbles import BubbleParams, HalfPlaneBubbleParams, eval_kernel
from .curvature import BoundaryAngle, CurvatureField, eval_curvatures
from .errors import (ContractionFailed, JacobianSingular, MaxIterExceeded,
                     NewtonDiverged)
from .grid import SolverGrid, _radial_area_weights, chebyshev_diff_matrix

logger = logging.getLogger(__name__)

CUTOFF_RADIUS = 10.0      # chart-units cutoff plateau; taper width 1
DENSE_CUTOFF = 17000      # unknown count above which solves go matrix-free


@dataclass
class SolutionField:
    """Scalar field on the disc grid (physical variables)."""

    values: np.ndarray
    epsilon: float
    grid: SolverGrid
    residual: float | None = None            # certified PDE residual (max norm)
    multiplier: float | None = None          # translation multiplier, blown-up units
    iterations: int | None = None
    effective_dilation_shift: float | None = None
    _values_ld: np.ndarray | None = dc_field(default=None, repr=False)

    @property
    def boundary_trace(self) -> np.ndarray:
        return self.values[0]

    def values_ld(self) -> np.ndarray:
        if self._values_ld is not None:
            return self._values_ld
        return self.values.astype(np.longdouble)


def ansatz_on_grid(a: AnsatzField, grid: SolverGrid) -> np.ndarray:
    """Second approximation U = U0 + H0 sampled at the grid nodes."""
    return a.eval_U(grid.nodes_xy())


def suggest_n_theta(epsilon: float, lam: float, D_ratio: float,
                    tail: float = 1e-6, cap: int = 768) -> int:
    """Angular size so the bubble's boundary trace decays below `tail`.

    Fourier coefficients of the trace fall like exp(-m lam eps sqrt(1+D^2)).
    """
    rate = lam * epsilon * math.sqrt(1.0 + D_ratio**2)
    n = 2.0 * math.log(1.0 / tail) / rate
    return int(min(cap, max(64, 32 * math.ceil(n / 32.0))))


# -- problem context ----------------------------------------------------------


class _ProblemCache:
    """Curvature data sampled once per (grid, field, epsilon)."""

    def __init__(self, grid: SolverGrid, field: CurvatureField, epsilon: float):
        self.grid = grid
        self.field = field
        self.epsilon = float(epsilon)
        self.K = field.eval_K(grid.nodes_xy())
        self.kappa = field.eval_kappa(grid.theta)
        self.K_ld = self.K.astype(np.longdouble)
        self.kappa_ld = self.kappa.astype(np.longdouble)

    def residual(self, u_ld: np.ndarray) -> np.ndarray:
        """PDE residual in extended precision; row 0 is the boundary equation."""
        g = self.grid
        eps = np.longdouble(self.epsilon)
        F = -g.laplacian_ld(u_ld) - eps**2 * self.K_ld * np.exp(2.0 * u_ld)
        shifted = np.roll(u_ld, g.n_theta // 2, axis=1)
        dr = g._ld["Dp"][0] @ u_ld + g._ld["Dm"][0] @ shifted
        F[0] = dr + 1.0 - eps * self.kappa_ld * np.exp(u_ld[0])
        return F

    def potentials(self, u: np.ndarray):
        """Linearization coefficients at u: (interior, boundary ring)."""
        eps = self.epsilon
        pot_int = 2.0 * eps**2 * self.K * np.exp(2.0 * u)
        pot_bdy = eps * self.kappa * np.exp(u[0])
        return pot_int, pot_bdy


def _fill_jacobian(M: np.ndarray, grid: SolverGrid, pot_int: np.ndarray,
                   pot_bdy: np.ndarray, borders):
    """Assemble the bordered collocation matrix in place.

    Rows: interior  -Lap - diag(pot_int)  (radial rows 1..n_r-1), boundary
    ring  d/dr - diag(pot_bdy).  Each (B, gw) border pair adds a multiplier
    column -B and a constraint row gw.
    """
    n_r, nt = grid.shape
    n = n_r * nt
    M[:] = 0.0
    A4 = M[:n, :n].reshape(n_r, nt, n_r, nt)
    k = np.arange(nt)
    ks = (k + nt // 2) % nt
    Rp = -(grid.D2p + grid.Dp / grid.r[:, None])
    Rm = -(grid.D2m + grid.Dm / grid.r[:, None])
    A4[:, k, :, k] = np.broadcast_to(Rp, (nt, n_r, n_r))
    A4[:, k, :, ks] = np.broadcast_to(Rm, (nt, n_r, n_r))
    i = np.arange(n_r)
    A4[i, :, i, :] += -grid.T2[None, :, :] / (grid.r**2)[:, None, None]
    idx = np.arange(n)
    M[idx, idx] -= pot_int.ravel()
    # boundary ring rows
    A4[0] = 0.0
    A4[0, k, :, k] = np.broadcast_to(grid.Dp[0], (nt, n_r))
    A4[0, k, :, ks] = np.broadcast_to(grid.Dm[0], (nt, n_r))
    M[k, k] -= pot_bdy
    for j, (B, gw) in enumerate(borders):
        M[:n, n + j] = -B.ravel()
        M[n + j, :n] = gw.ravel()
    if not borders and M.shape[0] > n:
        M[n, n] = 1.0


def _quintic_step(s: np.ndarray) -> np.ndarray:
    t = np.clip(s - CUTOFF_RADIUS, 0.0, 1.0)
    return 1.0 - t**3 * (10.0 - 15.0 * t + 6.0 * t * t)


def chart_coordinates(grid: SolverGrid, theta_xi: float, epsilon: float):
    """Boundary-flattening chart in blown-up units: (dtheta/eps, (1-r)/eps)."""
    dt = np.mod(grid.theta - theta_xi + np.pi, 2.0 * np.pi) - np.pi
    x1 = np.broadcast_to(dt / epsilon, grid.shape)
    x2 = np.broadcast_to(((1.0 - grid.r) / epsilon)[:, None], grid.shape)
    return np.stack([x1, x2], axis=-1)


def constraint_data(grid: SolverGrid, field: CurvatureField, p: BubbleParams,
                    index: int = 1):
    """Cutoff kernel (index 0: dilation-type, 1: translation) on the grid.

    Returns (B, gw): B = chi * Z (zeroed on the boundary ring rows, where the
    boundary equation lives), gw = area weights * chi * Z including the exact
    polar Jacobian.
    """
    K_xi, kap_xi = eval_curvatures(field, p.theta_xi)
    hp = HalfPlaneBubbleParams(a=K_xi, b=kap_xi, lam=p.lam)
    z = chart_coordinates(grid, p.theta_xi.theta, p.epsilon)
    zk = eval_kernel(index, hp, z)
    chi = _quintic_step(np.hypot(z[..., 0], z[..., 1]))
    gw = grid.quadrature_weights() * chi * zk
    B = (chi * zk).copy()
    B[0, :] = 0.0
    return B, gw


# -- linear algebra backends ---------------------------------------------------


class _Workspace:
    """Reusable dense buffer for the bordered collocation matrix."""

    def __init__(self):
        self.M = None

    def get(self, size: int) -> np.ndarray:
        if self.M is None or self.M.shape[0] != size:
            self.M = np.zeros((size, size))
        return self.M


class _ModeBlockPreconditioner:
    """Per-Fourier-mode radial solves with the angular-mean potential."""

    def __init__(self, grid: SolverGrid, pot_int: np.ndarray, pot_bdy: np.ndarray):
        self.grid = grid
        n_r, nt = grid.shape
        w_mean = pot_int.mean(axis=1)
        wb_mean = pot_bdy.mean()
        m = np.arange(nt // 2 + 1)
        blocks = np.empty((m.size, n_r, n_r))
        base_e = -(grid.D2p + grid.D2m + (grid.Dp + grid.Dm) / grid.r[:, None])
        base_o = -(grid.D2p - grid.D2m + (grid.Dp - grid.Dm) / grid.r[:, None])
        for mm in m:
            A = (base_e if mm % 2 == 0 else base_o).copy()
            A[np.arange(n_r), np.arange(n_r)] += mm**2 / grid.r**2 - w_mean
            A[0] = (grid.Dp[0] + (1 if mm % 2 == 0 else -1) * grid.Dm[0])
            A[0, 0] -= wb_mean
            blocks[mm] = A
        self.inv = np.linalg.inv(blocks)

    def apply(self, v: np.ndarray) -> np.ndarray:
        g = self.grid
        vh = np.fft.rfft(v.reshape(g.shape), axis=1)
        out = np.einsum("mij,jm->im", self.inv, vh)
        return np.fft.irfft(out, n=g.n_theta, axis=1).ravel()


def _solve_bordered_dense(M: np.ndarray, rhs: np.ndarray):
    try:
        lu = sla.lu_factor(M, overwrite_a=True, check_finite=False)
        sol = sla.lu_solve(lu, rhs, check_finite=False)
    except (sla.LinAlgError, ValueError) as exc:
        raise JacobianSingular(str(exc)) from exc
    if not np.all(np.isfinite(sol)):
        raise JacobianSingular("bordered dense solve returned non-finite values")
    return sol, lu


class _BorderedIterative:
    """Matrix-free bordered operator with a mode-block preconditioner."""

    def __init__(self, grid: SolverGrid, pot_int, pot_bdy, borders):
        self.grid = grid
        self.pot_int = pot_int
        self.pot_bdy = pot_bdy
        self.borders = borders
        self.k = len(borders)
        self.prec = _ModeBlockPreconditioner(grid, pot_int, pot_bdy)

    def matvec(self, v: np.ndarray) -> np.ndarray:
        g = self.grid
        n = g.size
        u = v[:n].reshape(g.shape)
        out = -g.laplacian(u) - self.pot_int * u
        shifted = np.roll(u, g.n_theta // 2, axis=1)
        out[0] = g.Dp[0] @ u + g.Dm[0] @ shifted - self.pot_bdy * u[0]
        tail = np.empty(self.k)
        for j, (B, gw) in enumerate(self.borders):
            out -= v[n + j] * B
            tail[j] = float((gw * u).sum())
        return np.concatenate([out.ravel(), tail])

    def solve(self, rhs: np.ndarray, rtol: float = 1e-12, maxiter: int = 800,
              x0: np.ndarray | None = None) -> np.ndarray:
        n = self.grid.size
        size = n + self.k
        A = spla.LinearOperator((size, size), matvec=self.matvec)

        def prec_apply(v):
            return np.concatenate([self.prec.apply(v[:n]), v[n:]])

        M = spla.LinearOperator((size, size), matvec=prec_apply)
        bnorm = np.linalg.norm(rhs)
        atol = max(rtol * bnorm, 1e-300)
        sol, info = spla.lgmres(A, rhs, x0=x0, M=M, rtol=rtol, atol=atol,
                                maxiter=maxiter, inner_m=40)
        if info != 0:
            resid = np.linalg.norm(self.matvec(sol) - rhs)
            if resid > 1e-8 * max(1.0, bnorm):
                raise JacobianSingular(
                    f"iterative bordered solve stalled (info={info}, "
                    f"resid={resid:.2e})")
        return sol


# -- Newton solver -------------------------------------------------------------


class _AnchoredSystem:
    """Damped Newton on the doubly-bordered system with absolute phase targets.

    Unknowns (u, c0, c1); equations F(u) = c0 B0 + c1 B1 with constraints
    g0.u = P0 + t and g1.u = P1.  The targets come from the nominal ansatz of
    the anchor parameters, so the solved system is independent of the seed.
    """

    def __init__(self, cache: _ProblemCache, grid: SolverGrid,
                 field: CurvatureField, anchor: BubbleParams,
                 workspace: _Workspace, n_modes: int,
                 ansatz: AnsatzField | None = None):
        self.cache = cache
        self.grid = grid
        self.borders = [constraint_data(grid, field, anchor, 0),
                        constraint_data(grid, field, anchor, 1)]
        self.B_ld = [b.astype(np.longdouble) for b, _ in self.borders]
        self.g_ld = [w.astype(np.longdouble) for _, w in self.borders]
        self.ansatz = ansatz or build_ansatz(field, anchor, n_modes=n_modes)
        nominal = ansatz_on_grid(self.ansatz, grid)
        self.targets = np.array([float((w * nominal).sum())
                                 for _, w in self.borders])
        self.B_scale = [float(np.abs(b).max()) for b, _ in self.borders]
        # phase-probe scale: <g0, chi Z0> integrates the squared kernel
        z0_full = self.borders[0][0].copy()
        z0_full[0] = self.borders[0][1][0] / np.maximum(
            grid.quadrature_weights()[0], 1e-300)
        self.q0 = abs(float((self.borders[0][1] * z0_full).sum()))
        self.ws = workspace
        self.nominal = nominal
        self._lu = None
        self._op = None

    def ext_residual(self, u, c):
        F = self.cache.residual(u)
        for j in range(2):
            F = F - c[j] * self.B_ld[j]
        tails = np.array([
            float((self.g_ld[0] * u).sum()) - self.targets[0],
            float((self.g_ld[1] * u).sum()) - self.targets[1],
        ])
        return F, tails

    def _linear_solve(self, pot_int, pot_bdy, rhs, fresh: bool):
        """Bordered linear solve, reusing the last factorization when allowed."""
        n = self.grid.size
        if n <= DENSE_CUTOFF:
            if fresh or self._lu is None:
                M = self.ws.get(n + 2)
                _fill_jacobian(M, self.grid, pot_int, pot_bdy, self.borders)
                sol, self._lu = _solve_bordered_dense(M, rhs)
                return sol
            return sla.lu_solve(self._lu, rhs, check_finite=False)
        if fresh or self._op is None:
            self._op = _BorderedIterative(self.grid, pot_int, pot_bdy,
                                          self.borders)
        return self._op.solve(rhs, rtol=1e-11)

    def solve_at(self, u, c, tol, max_iter=20):
        """Inner Newton at the system's phase targets.

        The Jacobian factorization is refreshed only when the chord step
        stops contracting well.
        """
        grid, cache = self.grid, self.cache
        n = grid.size
        F, tails = self.ext_residual(u, c)
        rnorm = max(float(np.abs(F).max()), float(np.abs(tails).max()))
        its = 0
        fresh = self._lu is None and self._op is None
        for it in range(max_iter):
            if rnorm <= tol:
                break
            pot_int, pot_bdy = cache.potentials(u.astype(float))
            rhs = np.empty(n + 2)
            rhs[:n] = -F.astype(float).ravel()
            rhs[n:] = -tails
            sol = self._linear_solve(pot_int, pot_bdy, rhs, fresh)
            du = sol[:n].reshape(grid.shape)
            dc = sol[n:]
            alpha, accepted = 1.0, False
            for _ in range(21):
                F2, t2 = self.ext_residual(u + alpha * du, c + alpha * dc)
                r2 = max(float(np.abs(F2).max()), float(np.abs(t2).max()))
                if r2 < rnorm:
                    u = u + alpha * du
                    c = c + alpha * dc
                    contraction = r2 / rnorm
                    F, tails, rnorm = F2, t2, r2
                    accepted = True
                    break
                alpha *= 0.5
            its = it + 1
            if not accepted:
                if fresh:
                    if rnorm <= 100.0 * tol:
                        break
                    raise NewtonDiverged(
                        f"anchored residual {rnorm:.3e} stalled at iteration {it}")
                fresh = True               # stale chord Jacobian; refresh
                continue
            fresh = alpha < 1.0 or contraction > 0.25
        else:
            raise MaxIterExceeded(
                f"anchored newton: residual {rnorm:.3e} after {max_iter} "
                f"iterations (tol {tol:g})")
        return u, c, rnorm, its




def newton_solve(grid: SolverGrid, field: CurvatureField, epsilon: float,
                 seed, tol: float = 1e-9, max_iter: int = 60,
                 anchor: BubbleParams | None = None,
                 workspace: _Workspace | None = None,
                 require_pde_residual: bool = True,
                 n_modes: int = 512) -> SolutionField:
    """Damped Newton iteration for the curvature problem on the disc.

    Solves  -Lap(u) = eps^2 K e^{2u},  du/dn + 1 = eps kappa e^{u}.  Without
    an anchor this is plain damped Newton (adequate away from the concentrated
    regime).  With an anchor the two soft kernel directions are bordered; the
    translation target is held at the anchor phase while the dilation-phase
    target is slid by a secant until its multiplier is below tolerance, which
    leaves a genuine solution of the unmodified problem.  The returned
    `multiplier` is the translation multiplier in blown-up units: it vanishes
    (to tolerance) exactly when the anchor angle is a solution phase.
    """
    cache = _ProblemCache(grid, field, epsilon)
    if isinstance(seed, SolutionField):
        u = seed.values_ld().copy()
    else:
        u = np.asarray(seed, dtype=np.longdouble).copy()
    ws = workspace or _Workspace()
    n = grid.size

    if anchor is None:
        rnorm_prev = None
        F = cache.residual(u)
        rnorm = float(np.abs(F).max())
        iterations = 0
        for it in range(max_iter):
            if rnorm <= tol:
                break
            pot_int, pot_bdy = cache.potentials(u.astype(float))
            rhs = np.empty(n + 1)
            rhs[:n] = -F.astype(float).ravel()
            rhs[n] = 0.0
            if n <= DENSE_CUTOFF:
                M = ws.get(n + 1)
                _fill_jacobian(M, grid, pot_int, pot_bdy, [])
                sol, _ = _solve_bordered_dense(M, rhs)
            else:
                op = _BorderedIterative(grid, pot_int, pot_bdy, [])
                sol = op.solve(rhs, rtol=1e-11)
            du = sol[:n].reshape(grid.shape)
            alpha, accepted = 1.0, False
            for _ in range(21):
                F2 = cache.residual(u + alpha * du)
                r2 = float(np.abs(F2).max())
                if r2 < rnorm:
                    u, F, rnorm = u + alpha * du, F2, r2
                    accepted = True
                    break
                alpha *= 0.5
            iterations = it + 1
            if not accepted:
                if rnorm <= 10.0 * tol:
                    break
                raise NewtonDiverged(
                    f"residual {rnorm:.3e} did not decrease at minimal step "
                    f"(iteration {it}); previous {rnorm_prev}")
            rnorm_prev = rnorm
        else:
            raise MaxIterExceeded(f"newton: residual {rnorm:.3e} after "
                                  f"{max_iter} iterations (tol {tol:g})")
        return SolutionField(values=u.astype(float), epsilon=epsilon,
                             grid=grid, residual=rnorm, multiplier=None,
                             iterations=iterations, _values_ld=u)

    # Outer iteration over the dilation parameter: the dilation multiplier c0
    # measures how far the anchored concentration scale is from a genuine
    # discrete solution.  For non-constant curvature c0(lam) crosses zero at
    # the physical scale; for constant data the continuum is dilation-neutral
    # and c0 is pure truncation defect decaying like exp(-n_theta lam eps /2),
    # so the solve settles at the first resolvable scale.
    K_xi, kap_xi = eval_curvatures(field, anchor.theta_xi)
    D_xi = kap_xi / math.sqrt(K_xi)
    decay_rate = 0.5 * grid.n_theta * epsilon * math.sqrt(1.0 + D_xi**2)
    lam_lo = max(0.25, 0.25 * anchor.lam)
    lam_hi = min(max(4.0 * anchor.lam, 2.0), 0.45 / (max(D_xi, 0.2) * epsilon), 8.0)
    lam = min(max(anchor.lam, lam_lo), lam_hi)
    c = np.zeros(2, dtype=np.longdouble)
    total_its = 0
    history: list[tuple[float, float]] = []
    system = None
    for outer in range(24):
        pk = BubbleParams(anchor.theta_xi, lam, epsilon)
        system = _AnchoredSystem(cache, grid, field, pk, ws, n_modes)
        if outer > 0 or not np.any(u):
            u = system.nominal.astype(np.longdouble)
        c0_target = 0.4 * tol / max(system.B_scale[0], 1e-300)
        u, c, rnorm, its = system.solve_at(u, c, tol, max_iter=max_iter)
        total_its += its
        c0 = float(c[0])
        logger.debug("newton outer %d: lam=%.4f c0=%.4e c1=%.4e (%d inner)",
                     outer, lam, c0, float(c[1]), its)
        if abs(c0) <= c0_target:
            break
        history.append((lam, c0))
        if len(history) >= 2 and history[-2][1] * c0 < 0.0:
            (la, ca), (lb, cb) = history[-2], history[-1]
            lam = lb - cb * (lb - la) / (cb - ca)      # bracketed crossing
            continue
        # one-signed so far: chase the truncation decay toward wider bubbles,
        # following the measured log-slope when it is informative
        rate = decay_rate
        if len(history) >= 2:
            (la, ca), (lb, cb) = history[-2], history[-1]
            if lb != la and ca * cb > 0:
                meas = (math.log(abs(ca)) - math.log(abs(cb))) / (lb - la)
                if abs(meas) > 0.1 * decay_rate:
                    rate = meas
        jump = math.log(abs(c0) / (0.5 * c0_target)) / rate
        lam_next = lam + max(min(jump, 1.25), -1.25)
        lam_next = min(max(lam_next, lam_lo), lam_hi)
        if lam_next == lam:
            raise NewtonDiverged(
                f"dilation multiplier {c0:.3e} is one-signed across the "
                f"admissible scale window [{lam_lo:.2f}, {lam_hi:.2f}]; no "
                f"genuine solution at this anchor and resolution")
        lam = lam_next
    else:
        raise MaxIterExceeded("dilation-parameter search did not converge")

    pde_res = float(np.abs(cache.residual(u)).max())
    logger.debug("newton: %d iterations, PDE residual %.3e, c=(%.2e, %.2e), "
                 "lam_eff=%.4f", total_its, pde_res, float(c[0]), float(c[1]),
                 lam)
    if require_pde_residual and pde_res > 10.0 * tol:
        raise NewtonDiverged(
            f"anchored solve left PDE residual {pde_res:.3e} "
            f"(multipliers {float(c[0]):.2e}, {float(c[1]):.2e}); the anchor "
            f"angle is not a solution phase at this resolution")
    return SolutionField(values=u.astype(float), epsilon=epsilon, grid=grid,
                         residual=pde_res,
                         multiplier=float(c[1]) * epsilon**2,
                         iterations=total_its,
                         effective_dilation_shift=lam - anchor.lam,
                         _values_ld=u)


def solve_with_continuation(grid: SolverGrid, field: CurvatureField,
                            epsilon: float, p: BubbleParams,
                            start_eps: float = 0.2, tol: float = 1e-9,
                            **kwargs) -> SolutionField:
    """Halve eps from start_eps to the target, transferring the correction.

    The seed at each level is the new ansatz plus the previous level's
    deviation from its own ansatz, so the transferred part stays small.
    """
    eps_list = []
    e = max(start_eps, epsilon)
    while e > epsilon * 1.0000001:
        eps_list.append(e)
        e /= 2.0
    eps_list.append(epsilon)
    u = None
    phi_prev = None
    for e in eps_list:
        pe = BubbleParams(p.theta_xi, p.lam, e)
        base = ansatz_on_grid(build_ansatz(field, pe), grid)
        seed = base if phi_prev is None else base + phi_prev
        u = newton_solve(grid, field, e, seed, tol=tol, anchor=pe, **kwargs)
        phi_prev = u.values - base
    return u


# -- integral identities --------------------------------------------------------


def mass_identity(u: SolutionField, field: CurvatureField,
                  refine: int = 2) -> float:
    """Total curvature mass of the solution field.

    Quadrature runs on a grid `refine` times finer than the solve grid (via
    spectral resampling), so the value reflects the field's discretization
    error instead of the collocation identities, which make the node-level
    mass defect vanish identically.
    """
    g = u.grid
    eps = u.epsilon
    n_rf = refine * g.n_r
    Nf = 2 * n_rf - 1
    tf, _, _ = chebyshev_diff_matrix(Nf, dtype=float)
    rf = tf[:n_rf]
    wf = _radial_area_weights(rf, Nf)
    ntf = refine * g.n_theta
    vals = g.resample(u.values, rf, ntf)
    thf = 2.0 * np.pi * np.arange(ntf) / ntf
    Rf, Tf = np.meshgrid(rf, thf, indexing="ij")
    pts = np.stack([Rf * np.sin(Tf), 1.0 - Rf * np.cos(Tf)], axis=-1)
    Kf = field.eval_K(pts)
    kapf = field.eval_kappa(thf)
    w_th = 2.0 * np.pi / ntf
    interior = float(np.sum(wf[:, None] * w_th * eps**2 * Kf * np.exp(2.0 * vals)))
    boundary = float(np.sum(w_th * eps * kapf * np.exp(vals[0])))
    return interior + boundary


def extract_blowup_point(u: SolutionField) -> BoundaryAngle:
    """Concentration angle: argmax of the boundary trace, quadratically refined."""
    tr = u.boundary_trace
    k = int(np.argmax(tr))
    n = tr.size
    vm, v0, vp = tr[k - 1], tr[k], tr[(k + 1) % n]
    denom = vm - 2.0 * v0 + vp
    delta = 0.0 if denom == 0.0 else 0.5 * (vm - vp) / denom
    h = 2.0 * np.pi / n
    return BoundaryAngle(u.grid.theta[k] + delta * h)


def trace_flatness(u: SolutionField, tol: float = 1e-6) -> bool:
    """True when the boundary trace is flat to `tol` (rotationally symmetric)."""
    tr = u.boundary_trace
    return float(tr.max() - tr.min()) < tol


# -- projected problems ----------------------------------------------------------


@dataclass(frozen=True)
class LinearizedOperator:
    """Linearization coefficients around a base field.

    W1, W2 are the blown-up-variable coefficients 2 K(eps y) e^{2V} and
    kappa(eps y) e^{V}; pot_interior / pot_boundary are their physical-variable
    counterparts entering the collocation rows.
    """

    W1: np.ndarray
    W2: np.ndarray
    pot_interior: np.ndarray
    pot_boundary: np.ndarray
    base_values: np.ndarray
    epsilon: float
    grid: SolverGrid
    field: CurvatureField
    bubble: BubbleParams | None = None


def assemble_linearization(base, field: CurvatureField, epsilon: float,
                           grid: SolverGrid | None = None) -> LinearizedOperator:
    """Linearized coefficients at an ansatz or a solution field."""
    bubble = None
    if isinstance(base, AnsatzField):
        if grid is None:
            raise ValueError("grid required when base is an ansatz")
        values = ansatz_on_grid(base, grid)
        bubble = base.bubble
    elif isinstance(base, SolutionField):
        grid = base.grid
        values = base.values
    else:
        values = np.asarray(base, dtype=float)
        if grid is None:
            raise ValueError("grid required when base is a raw array")
    cache = _ProblemCache(grid, field, epsilon)
    pot_int, pot_bdy = cache.potentials(values)
    return LinearizedOperator(W1=epsilon**2 * pot_int, W2=epsilon * pot_bdy,
                              pot_interior=pot_int, pot_boundary=pot_bdy,
                              base_values=values, epsilon=epsilon, grid=grid,
                              field=field, bubble=bubble)


@dataclass
class ProjectedSolveResult:
    phi: SolutionField
    c1: float
    orthogonality_residual: float
    iterations: int = 1

    @property
    def phi_norm(self) -> float:
        return float(np.abs(self.phi.values).max())


class ProjectedSolver:
    """Factored single-constraint bordered system for repeated projected solves.

    The multiplier column is the cutoff translation kernel; the constraint row
    is its weighted quadrature.  Forcing is accepted either in physical-row
    form (solve_x) or in the blown-up convention (solve).
    """

    def __init__(self, op: LinearizedOperator, bubble: BubbleParams | None = None):
        self.op = op
        self.grid = op.grid
        bubble = bubble or op.bubble
        if bubble is None:
            raise ValueError("projected solves need the bubble parameters")
        self.bubble = bubble
        self.B, self.gw = constraint_data(self.grid, op.field, bubble, 1)
        n = self.grid.size
        self._iter = None
        if n <= DENSE_CUTOFF:
            M = np.zeros((n + 1, n + 1))
            _fill_jacobian(M, self.grid, op.pot_interior, op.pot_boundary,
                           [(self.B, self.gw)])
            try:
                self._lu = sla.lu_factor(M, overwrite_a=True, check_finite=False)
            except (sla.LinAlgError, ValueError) as exc:
                raise JacobianSingular(str(exc)) from exc
        else:
            self._lu = None
            self._iter = _BorderedIterative(self.grid, op.pot_interior,
                                            op.pot_boundary,
                                            [(self.B, self.gw)])
        self._warm = None
        w = self.grid.quadrature_weights()
        with np.errstate(divide="ignore", invalid="ignore"):
            z2w = np.where(w > 0, self.gw**2 / w, 0.0)
        self._z_norm = math.sqrt(float(z2w.sum()))

    def solve_x(self, f_x: np.ndarray, h_x: np.ndarray) -> ProjectedSolveResult:
        """Solve with physical-row forcing (interior rows f_x, ring row h_x)."""
        n = self.grid.size
        rhs = np.empty(n + 1)
        fx = np.array(f_x, dtype=float)
        fx[0] = h_x
        rhs[:n] = fx.ravel()
        rhs[n] = 0.0
        if self._lu is not None:
            sol = sla.lu_solve(self._lu, rhs, check_finite=False)
            if not np.all(np.isfinite(sol)):
                raise JacobianSingular("projected solve returned non-finite values")
        else:
            sol = self._iter.solve(rhs, x0=self._warm)
            self._warm = sol
        phi = sol[:n].reshape(self.grid.shape)
        c_hat = sol[n]
        ip = float((self.gw * phi).sum())
        phi_norm = math.sqrt(float((self.grid.quadrature_weights() * phi**2).sum()))
        denom = phi_norm * self._z_norm
        orth = abs(ip) / denom if denom > 0 else abs(ip)
        eps = self.op.epsilon
        return ProjectedSolveResult(
            phi=SolutionField(values=phi, epsilon=eps, grid=self.grid),
            c1=eps**2 * c_hat, orthogonality_residual=orth)

    def solve(self, f: np.ndarray, h: np.ndarray) -> ProjectedSolveResult:
        """Solve with blown-up-convention forcing (f on nodes, h on the ring)."""
        eps = self.op.epsilon
        return self.solve_x(np.asarray(f) / eps**2, np.asarray(h) / eps)


def projected_linear_solve(op: LinearizedOperator, f, h,
                           bubble: BubbleParams | None = None) -> ProjectedSolveResult:
    """One projected linear solve; see ProjectedSolver for conventions."""
    return ProjectedSolver(op, bubble).solve(f, h)


def nonlinear_projected_solve(grid: SolverGrid, field: CurvatureField,
                              p: BubbleParams, tol: float = 1e-10,
                              max_iter: int = 40,
                              ansatz: AnsatzField | None = None,
                              n_quad: int = 1024, n_modes: int = 256,
                              workspace: _Workspace | None = None):
    """Projected nonlinear problem at the ansatz: perturbation and multiplier.

    Solves the residual-plus-nonlinearity system for phi with the translation
    multiplier c1, keeping phi orthogonal to both cutoff kernels.  A plain
    fixed-point iteration on the translation-projected problem diverges at
    desk-scale eps because the dilation kernel direction is soft (for constant
    curvature it is exactly neutral in the continuum), so the dilation
    direction is projected as well and the system is solved by the bordered
    Newton iteration; the dilation multiplier is reported for diagnostics.

    Returns (ProjectedSolveResult, AnsatzField); the result carries `c0` as an
    extra attribute.
    """
    a = ansatz or build_ansatz(field, p, n_quad=n_quad, n_modes=n_modes)
    cache = _ProblemCache(grid, field, p.epsilon)
    ws = workspace or _Workspace()
    system = _AnchoredSystem(cache, grid, field, p, ws, n_modes, ansatz=a)
    u = system.nominal.astype(np.longdouble)
    c = np.zeros(2, dtype=np.longdouble)
    try:
        u, c, rnorm, its = system.solve_at(u, c, max(tol, 1e-10) * 10.0,
                                           max_iter=max_iter)
    except (NewtonDiverged, MaxIterExceeded) as exc:
        raise ContractionFailed(str(exc)) from exc
    phi = (u - system.nominal.astype(np.longdouble)).astype(float)
    eps = p.epsilon
    ips = [float((gw * phi).sum()) for _, gw in system.borders]
    w = grid.quadrature_weights()
    phi_norm2 = math.sqrt(float((w * phi**2).sum()))
    with np.errstate(divide="ignore", invalid="ignore"):
        z2w = np.where(w > 0, system.borders[1][1]**2 / w, 0.0)
    z_norm = math.sqrt(float(z2w.sum()))
    denom = phi_norm2 * z_norm
    orth = abs(ips[1]) / denom if denom > 0 else abs(ips[1])
    res = ProjectedSolveResult(
        phi=SolutionField(values=phi, epsilon=eps, grid=grid),
        c1=eps**2 * float(c[1]), orthogonality_residual=orth,
        iterations=its)
    res.c0 = eps**2 * float(c[0])
    res.solution = SolutionField(values=u.astype(float), epsilon=eps,
                                 grid=grid,
                                 residual=float(np.abs(cache.residual(u)).max()),
                                 multiplier=res.c1, iterations=its,
                                 _values_ld=u)
    return res, a
