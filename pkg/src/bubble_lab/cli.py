"""Command-line experiment driver: configuration in, CSV/JSON reports out.

Exit codes: 0 all asserted checks pass, 1 configuration/validation error,
2 numerical failure (diverged/singular/not-converged), 3 invariant violation.
Metric-style fits are reported but never fail a run.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import logging
import math
import os
import sys

import numpy as np
import scipy

from . import __version__
from .ansatz import build_ansatz, eval_errors
from .bubbles import BubbleParams, HalfPlaneBubbleParams, half_plane_residual, \
    kernel_annihilation
from .config import SCHEMA_VERSION, ExperimentConfig, load_config
from .curvature import BoundaryAngle, CurvatureField, find_extremum_reduced
from .errors import (BubbleLabError, ConfigError, ConstantReducedFunctional,
                     ContractionFailed, JacobianSingular, MaxIterExceeded,
                     NewtonDiverged, QuadratureNotConverged, TailNotConvergent)
from .grid import build_grid
from .quadrature import AppendixLemmaId, verify_lemma
from .reduction import (argextrema_angles, c1_scan, energy_scan,
                        expansion_study, fit_decay_exponent, predicted_energy,
                        scaled_energy)
from .solver import (ansatz_on_grid, extract_blowup_point, mass_identity,
                     newton_solve, trace_flatness)

logger = logging.getLogger(__name__)

NUMERICAL_ERRORS = (NewtonDiverged, JacobianSingular, MaxIterExceeded,
                    ContractionFailed, QuadratureNotConverged,
                    TailNotConvergent)


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def _write_csv(path: str, columns, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _write_summary(path: str, subcommand: str, cfg: ExperimentConfig,
                   checks, metrics, error=None):
    payload = {
        "schema_version": SCHEMA_VERSION,
        "subcommand": subcommand,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "versions": {
            "bubble_lab": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": sys.version.split()[0],
        },
        "config": cfg.echo(),
        "checks": checks,
        "metrics": metrics,
    }
    if error is not None:
        payload["error"] = error
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_fmt)
        fh.write("\n")


def _check(name, value, threshold):
    return {"name": name, "value": _fmt(float(value)),
            "threshold": _fmt(float(threshold)),
            "passed": bool(value <= threshold)}


# -- subcommand runners ---------------------------------------------------------


def run_verify_bubble(cfg: ExperimentConfig):
    rng = np.random.default_rng(cfg.seed)
    pts = np.column_stack([rng.uniform(-6, 6, 200), rng.uniform(0, 6, 200)])
    bx = rng.uniform(-6, 6, 200)
    rows = []
    worst = {"pde": 0.0, "z0": 0.0, "z1": 0.0}
    sweep = [0.5, 1.0, 2.0]
    for a in sweep:
        for b in sweep:
            for lam in sweep:
                p = HalfPlaneBubbleParams(a, b, lam, s=0.0)
                r_pde = half_plane_residual(
                    HalfPlaneBubbleParams(a, b, lam, s=0.7), pts, bx)
                r_z0 = kernel_annihilation(0, p, pts, bx)
                r_z1 = kernel_annihilation(1, p, pts, bx)
                worst["pde"] = max(worst["pde"], r_pde)
                worst["z0"] = max(worst["z0"], r_z0)
                worst["z1"] = max(worst["z1"], r_z1)
                rows.append([a, b, lam, r_pde, r_z0, r_z1])
    # negative control: a smooth bump must NOT annihilate
    p = HalfPlaneBubbleParams(1.0, 1.0, 1.0)
    bump = lambda q: np.exp(-((q[..., 0]) ** 2 + (q[..., 1] - 1.0) ** 2))  # noqa: E731
    bump_lap = lambda q: bump(q) * (4.0 * ((q[..., 0]) ** 2                 # noqa: E731
                                           + (q[..., 1] - 1.0) ** 2) - 4.0)
    bump_dx2 = lambda q: bump(q) * (-2.0 * (q[..., 1] - 1.0))               # noqa: E731
    r_neg = kernel_annihilation(0, p, pts, bx, func=bump,
                                func_lap=bump_lap, func_dx2=bump_dx2)
    checks = [
        _check("half_plane_pde_residual", worst["pde"], 1e-11),
        _check("kernel_z0_residual", worst["z0"], 1e-11),
        _check("kernel_z1_residual", worst["z1"], 1e-11),
        {"name": "negative_control_bump", "value": _fmt(r_neg),
         "threshold": ">= 0.01", "passed": bool(r_neg >= 1e-2)},
    ]
    cols = ["a", "b", "lam", "half_plane_residual", "z0_residual", "z1_residual"]
    return cols, rows, checks, {}


def run_verify_appendix(cfg: ExperimentConfig):
    rows = []
    all_pass = True
    eps = cfg.epsilons[0]
    for lemma in AppendixLemmaId:
        for D in [0.0, 0.5, 1.0, 2.0]:
            for lam in [0.5, 1.0, 2.0]:
                res = verify_lemma(lemma, D, lam, eps, tol=cfg.quad_tol)
                if lemma is AppendixLemmaId.A5:
                    bound = 8.0 * math.pi * (1.0 + D * lam) * eps
                    ok = res.abs_err <= bound
                elif abs(res.closed_form) < 1e-12:
                    ok = res.abs_err <= 1e-8
                else:
                    ok = res.rel_err <= 1e-6
                all_pass &= ok
                rows.append([lemma.value, D, lam, eps, res.numeric,
                             res.closed_form, res.abs_err, res.rel_err,
                             res.n_evals, ok])
    checks = [{"name": "appendix_closed_forms", "value": str(all_pass),
               "threshold": "all rows", "passed": bool(all_pass)}]
    cols = ["lemma", "D_ratio", "lam", "epsilon", "numeric", "closed_form",
            "abs_err", "rel_err", "n_evals", "passed"]
    return cols, rows, checks, {}


def run_ansatz_residual(cfg: ExperimentConfig):
    field = cfg.curvature_field()
    lam = cfg.lambdas[0]
    rows = []
    r1n, r2n, h0n = [], [], []
    checks = []
    for eps in cfg.epsilons:
        p = BubbleParams(BoundaryAngle(cfg.theta_xi), lam, eps)
        a = build_ansatz(field, p, n_quad=cfg.n_quad, n_modes=cfg.n_modes)
        _, _, rep = eval_errors(a, alpha=cfg.alpha_diagnostic)
        th = np.linspace(0.0, 2.0 * np.pi, 2048, endpoint=False)
        sup_h0 = float(np.abs(a.correction.eval(
            np.stack([np.sin(th), 1.0 - np.cos(th)], axis=-1))).max())
        rows.append([eps, lam, a.flux.d, a.flux.int_abs_I1,
                     a.flux.compat_residual, sup_h0, rep.interior_norm,
                     rep.boundary_norm])
        r1n.append(rep.interior_norm)
        r2n.append(rep.boundary_norm)
        h0n.append(sup_h0)
        checks.append(_check(f"flux_compatibility_eps_{eps:g}",
                             abs(a.flux.compat_residual), 1e-10))
        checks.append(_check(f"d_bounded_eps_{eps:g}", abs(a.flux.d), 5.0))
    metrics = {}
    if len(cfg.epsilons) >= 2:
        metrics["R1_decay_exponent"] = _fmt(
            fit_decay_exponent(cfg.epsilons, r1n))
        metrics["R2_decay_exponent"] = _fmt(
            fit_decay_exponent(cfg.epsilons, r2n))
        metrics["H0_decay_exponent"] = _fmt(
            fit_decay_exponent(cfg.epsilons, h0n))
    cols = ["epsilon", "lam", "d", "int_abs_I1", "compat_residual",
            "sup_H0", "R1_weighted_norm", "R2_weighted_norm"]
    return cols, rows, checks, metrics


def run_solve(cfg: ExperimentConfig):
    field = cfg.curvature_field()
    grid = build_grid(cfg.n_theta, cfg.n_r)
    rows = []
    checks = []
    for eps in cfg.epsilons:
        for lam in cfg.lambdas:
            p = BubbleParams(BoundaryAngle(cfg.theta_xi), lam, eps)
            seed = ansatz_on_grid(
                build_ansatz(field, p, n_quad=cfg.n_quad,
                             n_modes=cfg.n_modes), grid)
            u = newton_solve(grid, field, eps, seed, tol=cfg.newton_tol,
                             anchor=p, n_modes=cfg.n_modes)
            mass = mass_identity(u, field)
            defect = abs(mass - 2.0 * math.pi) / (2.0 * math.pi)
            blowup = extract_blowup_point(u)
            rows.append([eps, lam, u.iterations, u.residual, mass, defect,
                         blowup.theta, u.multiplier,
                         lam + u.effective_dilation_shift,
                         trace_flatness(u)])
            checks.append(_check(f"mass_defect_eps_{eps:g}_lam_{lam:g}",
                                 defect, 1e-4))
    cols = ["epsilon", "lam", "iterations", "pde_residual", "mass",
            "mass_defect_rel", "blowup_theta", "c1_multiplier",
            "lam_effective", "trace_flat"]
    return cols, rows, checks, {}


def run_scan_xi(cfg: ExperimentConfig, jobs: int | None = None):
    field = cfg.curvature_field()
    eps = cfg.epsilons[-1]
    lam = cfg.lambdas[0]
    reports = energy_scan(field, eps, lam, cfg.theta_grid,
                          n_modes=cfg.n_modes, fp_tol=cfg.fixed_point_tol,
                          jobs=jobs)
    rows_c1, zeros = c1_scan(field, eps, lam, cfg.theta_grid,
                             n_modes=cfg.n_modes,
                             fp_tol=cfg.fixed_point_tol, jobs=jobs)
    rows = [[r.theta.theta, r.c1, r.phi_norm, rep.E_tilde, rep.E_scaled,
             rep.E_predicted, rep.gap]
            for r, rep in zip(rows_c1, reports)]
    extrema = argextrema_angles(reports)
    cell = 2.0 * np.pi / max(1, len(rows))
    paired = 0
    for z in zeros:
        if any(z.distance_to(th) <= 1.5 * cell for th, _ in extrema):
            paired += 1
    metrics = {
        "c1_zeros": [_fmt(z.theta) for z in zeros],
        "energy_extrema": [[_fmt(t.theta), kind] for t, kind in extrema],
        "c1_flat_range": _fmt(float(max(abs(r.c1) for r in rows_c1))),
        "energy_range": _fmt(float(max(r.E_scaled for r in reports)
                                   - min(r.E_scaled for r in reports))),
    }
    checks = []
    if zeros and extrema:
        checks.append({"name": "zeros_match_extrema",
                       "value": f"{paired}/{len(zeros)}",
                       "threshold": "all zeros within 1.5 cells",
                       "passed": bool(paired == len(zeros))})
    cols = ["theta", "c1", "phi_norm", "E_tilde", "E_scaled", "E_predicted",
            "gap"]
    return cols, rows, checks, metrics


def run_energy_study(cfg: ExperimentConfig, jobs: int | None = None):
    field = cfg.curvature_field()
    try:
        ext = find_extremum_reduced(field, 256)
        theta_star = [e for e in ext if e.kind == "max"][0].theta
    except ConstantReducedFunctional:
        theta_star = BoundaryAngle(cfg.theta_xi)
    study = expansion_study(field, theta_star, cfg.lambdas, cfg.epsilons,
                            n_modes=cfg.n_modes, fp_tol=cfg.fixed_point_tol,
                            n_r=cfg.n_r if cfg.n_r <= 64 else 64, jobs=jobs)
    rows = [[r.epsilon, r.lam, r.theta.theta, r.E_tilde, r.E_scaled,
             r.E_predicted, r.gap, r.c1, r.phi_norm] for r in study.rows]
    metrics = {
        "gap_decay_exponent": _fmt(study.gap_exponent),
        "lambda_spread_exponent": _fmt(study.spread_exponent),
        "gap_by_eps": {f"{k:g}": _fmt(v) for k, v in study.gap_by_eps.items()},
        "spread_by_eps": {f"{k:g}": _fmt(v)
                          for k, v in study.spread_by_eps.items()},
        "theta_star": _fmt(theta_star.theta),
    }
    cols = ["epsilon", "lam", "theta", "E_tilde", "E_scaled", "E_predicted",
            "gap", "c1", "phi_norm"]
    return cols, rows, checks_from_metrics(), metrics


def checks_from_metrics():
    return []


RUNNERS = {
    "verify-bubble": run_verify_bubble,
    "verify-appendix": run_verify_appendix,
    "ansatz-residual": run_ansatz_residual,
    "solve": run_solve,
    "scan-xi": run_scan_xi,
    "energy-study": run_energy_study,
}
PARALLEL = {"scan-xi", "energy-study"}


def _run_one(name: str, cfg: ExperimentConfig, out_dir: str, jobs: int | None):
    csv_path = os.path.join(out_dir, f"{name}.csv")
    json_path = os.path.join(out_dir, f"{name}_summary.json")
    runner = RUNNERS[name]
    try:
        if name in PARALLEL:
            cols, rows, checks, metrics = runner(cfg, jobs=jobs)
        else:
            cols, rows, checks, metrics = runner(cfg)
    except NUMERICAL_ERRORS as exc:
        _write_summary(json_path, name, cfg, [], {},
                       error={"type": type(exc).__name__, "message": str(exc)})
        logger.error("%s: numerical failure: %s", name, exc)
        return 2
    _write_csv(csv_path, cols, rows)
    failed = [c for c in checks if not c["passed"]]
    _write_summary(json_path, name, cfg, checks, metrics)
    for c in checks:
        logger.info("%s: %s %s (value %s, threshold %s)", name, c["name"],
                    "PASS" if c["passed"] else "FAIL", c["value"],
                    c["threshold"])
    return 3 if failed else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="bubble-lab",
        description="Concentration-solution laboratory for the singularly "
                    "perturbed curvature problem on the unit disc")
    parser.add_argument("subcommand",
                        choices=sorted(RUNNERS.keys()) + ["all"])
    parser.add_argument("--config", required=True, help="TOML config path")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--jobs", type=int, default=None,
                        help="parallel scan workers (env BUBBLE_LAB_JOBS)")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        record = {"type": "ConfigError", "field": exc.field,
                  "message": str(exc)}
        out_dir = args.out or "out"
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "config_error.json"), "w") as fh:
            json.dump({"schema_version": SCHEMA_VERSION, "error": record}, fh,
                      indent=2, sort_keys=True)
        logger.error("configuration invalid: %s", exc)
        return 1
    except (OSError, BubbleLabError) as exc:
        logger.error("could not load configuration: %s", exc)
        return 1
    out_dir = args.out or cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    names = list(RUNNERS) if args.subcommand == "all" else [args.subcommand]
    worst = 0
    for name in names:
        code = _run_one(name, cfg, out_dir, args.jobs)
        worst = max(worst, code)
        if code == 2 and args.subcommand == "all":
            break
    return worst


if __name__ == "__main__":
    sys.exit(main())
