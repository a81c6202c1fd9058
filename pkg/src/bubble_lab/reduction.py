"""Finite-dimensional reduction as an experiment: energy functional, predicted
expansion, angle scans of the energy and the translation multiplier, and
convergence studies in the singular parameter.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .ansatz import AnsatzField, build_ansatz
from .bubbles import BubbleParams, disc_bubble_gradient, eval_disc_bubble
from .curvature import (BoundaryAngle, CurvatureField, boundary_point,
                        eval_reduced, reduced_profile)
from .grid import SolverGrid, _radial_area_weights, build_grid, chebyshev_diff_matrix
from .solver import (SolutionField, ansatz_on_grid, nonlinear_projected_solve,
                     suggest_n_theta, _Workspace)

logger = logging.getLogger(__name__)

FOUR_PI = 4.0 * math.pi


@dataclass(frozen=True)
class EnergyReport:
    """Energy of one scan cell against the predicted expansion."""

    E_tilde: float          # disc-variable energy
    E_scaled: float         # blown-up energy = E_tilde + 4 pi ln eps
    E_predicted: float
    gap: float              # E_scaled - E_predicted
    epsilon: float
    theta: BoundaryAngle
    lam: float
    c1: float = math.nan
    phi_norm: float = math.nan


@dataclass(frozen=True)
class C1ScanRow:
    theta: BoundaryAngle
    c1: float
    phi_norm: float


def _fine_quadrature(grid: SolverGrid, refine: int):
    n_rf = refine * grid.n_r
    Nf = 2 * n_rf - 1
    tf, _, _ = chebyshev_diff_matrix(Nf, dtype=float)
    rf = tf[:n_rf]
    wf = _radial_area_weights(rf, Nf)
    ntf = refine * grid.n_theta
    thf = 2.0 * np.pi * np.arange(ntf) / ntf
    return rf, wf, thf


def _polar_gradient_parts(points, grads):
    """Cartesian gradients -> (radial, tangential/r) components on the disc."""
    x1 = points[..., 0]
    x2 = points[..., 1]
    r = np.hypot(x1, 1.0 - x2)
    with np.errstate(invalid="ignore", divide="ignore"):
        er = np.stack([x1 / r, -(1.0 - x2) / r], axis=-1)
        et = np.stack([(1.0 - x2) / r, x1 / r], axis=-1)
    ur = (grads * er).sum(axis=-1)
    ut = (grads * et).sum(axis=-1)
    return ur, ut


def energy_functional(u, field: CurvatureField, epsilon: float,
                      grid: SolverGrid | None = None, refine: int = 2) -> float:
    """Disc-variable energy of a field or an (ansatz, perturbation) pair.

    0.5 int |grad u|^2 - (eps^2/2) int K e^{2u} + int_bd u - eps int_bd kappa e^u.
    Ansatz contributions are evaluated from their closed forms on a quadrature
    grid `refine` times finer than the solver grid; grid perturbations are
    resampled spectrally.
    """
    ansatz = None
    phi = None
    if isinstance(u, AnsatzField):
        ansatz = u
        grid = grid or build_grid(128, 64)
    elif isinstance(u, tuple):
        ansatz, phi = u
        grid = grid or phi.grid if isinstance(phi, SolutionField) else grid
        if isinstance(phi, SolutionField):
            grid = phi.grid
            phi = phi.values
    elif isinstance(u, SolutionField):
        grid = u.grid
        phi = u.values
    else:
        phi = np.asarray(u, dtype=float)
        if grid is None:
            raise ValueError("grid required for raw array input")

    rf, wf, thf = _fine_quadrature(grid, refine)
    Rf, Tf = np.meshgrid(rf, thf, indexing="ij")
    pts = np.stack([Rf * np.sin(Tf), 1.0 - Rf * np.cos(Tf)], axis=-1)
    bpts = boundary_point(thf)
    w_th = 2.0 * np.pi / thf.size
    area_w = wf[:, None] * w_th

    ur = np.zeros(Rf.shape)
    ut = np.zeros(Rf.shape)
    vals = np.zeros(Rf.shape)
    trace = np.zeros(thf.size)
    if ansatz is not None:
        gr = (disc_bubble_gradient(ansatz.bubble, ansatz.field, pts)
              + ansatz.correction.eval_gradient(pts))
        pur, put = _polar_gradient_parts(pts, gr)
        ur += pur
        ut += put
        vals += ansatz.eval_U(pts)
        trace += ansatz.eval_U(bpts)
    if phi is not None:
        vals += grid.resample(phi, rf, thf.size)
        trace += grid.resample(phi, np.array([1.0]), thf.size)[0]
        pr = grid.resample(grid.radial_derivative(phi), rf, thf.size)
        pt = grid.resample(grid.theta_derivative(phi), rf, thf.size)
        ur += pr
        with np.errstate(invalid="ignore", divide="ignore"):
            ut += np.where(Rf > 0, pt / np.maximum(Rf, 1e-300), 0.0)
    grad2 = ur**2 + ut**2
    K = field.eval_K(pts)
    kap = field.eval_kappa(thf)
    interior = float(np.sum(area_w * (0.5 * grad2
                                      - 0.5 * epsilon**2 * K * np.exp(2.0 * vals))))
    boundary = float(np.sum(w_th * (trace - epsilon * kap * np.exp(trace))))
    return interior + boundary


def predicted_energy(field: CurvatureField, theta: BoundaryAngle | float,
                     epsilon: float) -> float:
    """Leading terms of the blown-up energy at concentration angle theta."""
    red = eval_reduced(field, theta if isinstance(theta, BoundaryAngle)
                       else BoundaryAngle(float(theta)))
    return (2.0 * math.pi * math.log(epsilon) - 2.0 * math.pi
            + 2.0 * math.pi * math.log(2.0)
            - 2.0 * math.pi * math.log(red.phi_red))


def scaled_energy(E_tilde: float, epsilon: float) -> float:
    """Blown-up energy from the disc-variable value (exact identity)."""
    return E_tilde + FOUR_PI * math.log(epsilon)


# -- scan machinery -------------------------------------------------------------


def _scan_grid(field: CurvatureField, epsilon: float, lam: float,
               n_r: int = 48, tail: float = 1e-5, cap: int = 512) -> SolverGrid:
    thetas = np.linspace(0.0, 2.0 * np.pi, 256, endpoint=False)
    prof = reduced_profile(field, thetas)
    kap = field.eval_kappa(thetas)
    K = field.eval_K(boundary_point(thetas))
    D_max = float(np.max(kap / np.sqrt(K)))
    n_theta = suggest_n_theta(epsilon, lam, D_max, tail=tail, cap=cap)
    return build_grid(n_theta, n_r)


def _cell(field: CurvatureField, epsilon: float, lam: float, theta: float,
          grid: SolverGrid, n_modes: int, fp_tol: float,
          workspace: _Workspace | None = None):
    p = BubbleParams(BoundaryAngle(theta), lam, epsilon)
    res, a = nonlinear_projected_solve(grid, field, p, tol=fp_tol,
                                       n_modes=n_modes, workspace=workspace)
    E_tilde = energy_functional((a, res.phi), field, epsilon, grid=grid)
    E_sc = scaled_energy(E_tilde, epsilon)
    E_pred = predicted_energy(field, p.theta_xi, epsilon)
    report = EnergyReport(E_tilde=E_tilde, E_scaled=E_sc, E_predicted=E_pred,
                          gap=E_sc - E_pred, epsilon=epsilon,
                          theta=p.theta_xi, lam=lam, c1=res.c1,
                          phi_norm=res.phi_norm)
    return report


def _cell_worker(args):
    field_spec, epsilon, lam, theta, grid_shape, n_modes, fp_tol = args
    field = CurvatureField(*field_spec)
    grid = build_grid(*grid_shape)
    rep = _cell(field, epsilon, lam, theta, grid, n_modes, fp_tol)
    return rep


def _run_cells(field: CurvatureField, epsilon: float, lam: float,
               thetas, grid: SolverGrid, n_modes: int, fp_tol: float,
               jobs: int = 1):
    if jobs <= 1:
        ws = _Workspace()
        return [_cell(field, epsilon, lam, th, grid, n_modes, fp_tol, ws)
                for th in thetas]
    spec = (field.K_poly, field.kappa_a0, field.kappa_cos, field.kappa_sin,
            field.validation_grid_size)
    args = [(spec, epsilon, lam, th, grid.shape, n_modes, fp_tol)
            for th in thetas]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_cell_worker, args))


def default_jobs() -> int:
    env = os.environ.get("BUBBLE_LAB_JOBS")
    if env:
        return max(1, int(env))
    return 1


def energy_scan(field: CurvatureField, epsilon: float, lam: float,
                theta_grid, n_modes: int = 384, fp_tol: float = 1e-10,
                grid: SolverGrid | None = None, jobs: int | None = None):
    """Energy reports over a uniform angle grid (or explicit angles)."""
    if isinstance(theta_grid, int):
        if theta_grid < 32:
            raise ValueError("theta grid needs at least 32 points")
        thetas = np.linspace(0.0, 2.0 * np.pi, theta_grid, endpoint=False)
    else:
        thetas = np.asarray(theta_grid, dtype=float)
    grid = grid or _scan_grid(field, epsilon, lam)
    return _run_cells(field, epsilon, lam, thetas, grid, n_modes, fp_tol,
                      jobs or default_jobs())


def c1_scan(field: CurvatureField, epsilon: float, lam: float,
            theta_grid, n_modes: int = 384, fp_tol: float = 1e-10,
            grid: SolverGrid | None = None, jobs: int | None = None,
            refine_zeros: bool = True, zero_tol: float = 1e-4):
    """Translation multiplier over the angle grid, with bisected sign changes.

    Returns (rows, zeros): scan rows and the refined zero angles.
    """
    reports = energy_scan(field, epsilon, lam, theta_grid, n_modes=n_modes,
                          fp_tol=fp_tol, grid=grid, jobs=jobs)
    rows = [C1ScanRow(r.theta, r.c1, r.phi_norm) for r in reports]
    zeros = []
    if refine_zeros:
        grid = grid or _scan_grid(field, epsilon, lam)
        ws = _Workspace()

        def c1_at(th):
            p = BubbleParams(BoundaryAngle(th), lam, epsilon)
            res, _ = nonlinear_projected_solve(grid, field, p, tol=fp_tol,
                                               n_modes=n_modes, workspace=ws)
            return res.c1

        n = len(rows)
        for i in range(n):
            a_row, b_row = rows[i], rows[(i + 1) % n]
            ca, cb = a_row.c1, b_row.c1
            if not (np.isfinite(ca) and np.isfinite(cb)) or ca * cb > 0.0:
                continue
            if ca == 0.0:
                zeros.append(a_row.theta)
                continue
            ta = a_row.theta.theta
            tb = ta + (b_row.theta.theta - ta) % (2.0 * np.pi)
            while tb - ta > zero_tol:
                tm = 0.5 * (ta + tb)
                cm = c1_at(tm)
                if cm == 0.0:
                    ta = tb = tm
                    break
                if cm * ca > 0.0:
                    ta, ca = tm, cm
                else:
                    tb, cb = tm, cm
            zeros.append(BoundaryAngle(0.5 * (ta + tb)))
    return rows, zeros


def argextrema_angles(reports):
    """Angles of strict local extrema of the scanned energy (cyclic)."""
    vals = np.array([r.E_scaled for r in reports])
    n = vals.size
    out = []
    for i in range(n):
        vm, v0, vp = vals[i - 1], vals[i], vals[(i + 1) % n]
        if (v0 > vm and v0 > vp) or (v0 < vm and v0 < vp):
            kind = "max" if v0 > vm else "min"
            out.append((reports[i].theta, kind))
    return out


def fit_decay_exponent(epsilons, values) -> float:
    """Least-squares slope of ln(value) against ln(eps)."""
    x = np.log(np.asarray(epsilons, dtype=float))
    y = np.log(np.maximum(np.abs(np.asarray(values, dtype=float)), 1e-300))
    A = np.stack([x, np.ones_like(x)], axis=1)
    slope, _ = np.linalg.lstsq(A, y, rcond=None)[0]
    return float(slope)


@dataclass(frozen=True)
class ExpansionStudy:
    rows: list
    gap_exponent: float
    spread_exponent: float
    gap_by_eps: dict
    spread_by_eps: dict


def expansion_study(field: CurvatureField, theta_star: BoundaryAngle | float,
                    lambdas, epsilons, n_modes: int = 512,
                    fp_tol: float = 1e-10, n_r: int = 48,
                    jobs: int | None = None) -> ExpansionStudy:
    """Energy-expansion convergence table over (lambda, eps) at a fixed angle.

    Reports the fitted decay exponent of the worst-over-lambda gap and of the
    lambda-spread of the blown-up energy.
    """
    th = theta_star if isinstance(theta_star, BoundaryAngle) \
        else BoundaryAngle(float(theta_star))
    eps_list = sorted(set(float(e) for e in epsilons), reverse=True)
    lam_list = sorted(set(float(x) for x in lambdas))
    rows = []
    gap_by_eps = {}
    spread_by_eps = {}
    for eps in eps_list:
        cell_rows = []
        for lam in lam_list:
            grid = _scan_grid(field, eps, lam, n_r=n_r)
            rep = _cell(field, eps, lam, th.theta, grid, n_modes, fp_tol)
            cell_rows.append(rep)
            rows.append(rep)
        gap_by_eps[eps] = max(abs(r.gap) for r in cell_rows)
        e_vals = [r.E_scaled for r in cell_rows]
        spread_by_eps[eps] = max(e_vals) - min(e_vals) if len(e_vals) > 1 else 0.0
    gap_exp = fit_decay_exponent(eps_list, [gap_by_eps[e] for e in eps_list])
    spread_exp = (fit_decay_exponent(eps_list, [spread_by_eps[e] for e in eps_list])
                  if len(lam_list) > 1 else math.nan)
    return ExpansionStudy(rows=rows, gap_exponent=gap_exp,
                          spread_exponent=spread_exp, gap_by_eps=gap_by_eps,
                          spread_by_eps=spread_by_eps)
