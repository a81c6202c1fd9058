"""Experiment configuration: TOML parsing and validation."""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:                      # Python 3.10
    import tomli as tomllib

from .curvature import CurvatureField
from .errors import ConfigError, CurvatureNotPositive

SCHEMA_VERSION = 1


@dataclass
class ExperimentConfig:
    K_poly: np.ndarray
    kappa_a0: float
    kappa_cos: list
    kappa_sin: list
    n_theta: int = 128
    n_r: int = 64
    n_modes: int = 512
    n_quad: int = 1024
    lambdas: list = dc_field(default_factory=lambda: [1.0])
    epsilons: list = dc_field(default_factory=lambda: [0.1, 0.05])
    theta_xi: float = 0.0
    theta_grid: int = 32
    newton_tol: float = 1e-9
    quad_tol: float = 1e-8
    fixed_point_tol: float = 1e-10
    alpha_diagnostic: float = 0.9
    seed: int = 0
    out_dir: str = "out"
    validation_grid_size: int = 4096

    def validate(self):
        if self.n_theta < 64 or self.n_theta % 2:
            raise ConfigError("grid.n_theta", "must be even and at least 64")
        if self.n_r < 48:
            raise ConfigError("grid.n_r", "must be at least 48")
        if self.n_modes < 1:
            raise ConfigError("grid.n_modes", "must be positive")
        if self.n_quad < 512:
            raise ConfigError("grid.n_quad", "must be at least 512")
        if not self.lambdas or any(l <= 0 for l in self.lambdas):  # noqa: E741
            raise ConfigError("bubble.lambdas", "must all be positive")
        if not self.epsilons or any(not 0 < e < 1 for e in self.epsilons):
            raise ConfigError("bubble.epsilons", "must lie in (0, 1)")
        if any(b >= a for a, b in zip(self.epsilons, self.epsilons[1:])):
            pass
        if list(self.epsilons) != sorted(self.epsilons, reverse=True) or \
                len(set(self.epsilons)) != len(self.epsilons):
            raise ConfigError("bubble.epsilons", "must be strictly decreasing")
        if self.theta_grid < 32:
            raise ConfigError("bubble.theta_grid", "must be at least 32")
        for name in ("newton_tol", "quad_tol", "fixed_point_tol"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"tolerances.{name}", "must be positive")
        if not 0.0 < self.alpha_diagnostic < 1.0:
            raise ConfigError("alpha_diagnostic", "must lie in (0, 1)")
        try:
            self.curvature_field()
        except CurvatureNotPositive as exc:
            raise ConfigError("curvature", str(exc)) from exc
        return self

    def curvature_field(self) -> CurvatureField:
        return CurvatureField(self.K_poly, self.kappa_a0,
                              np.asarray(self.kappa_cos, dtype=float),
                              np.asarray(self.kappa_sin, dtype=float),
                              self.validation_grid_size)

    def echo(self) -> dict:
        return {
            "curvature": {
                "K_poly": np.asarray(self.K_poly, dtype=float).tolist(),
                "kappa_a0": self.kappa_a0,
                "kappa_cos": list(map(float, self.kappa_cos)),
                "kappa_sin": list(map(float, self.kappa_sin)),
            },
            "grid": {"n_theta": self.n_theta, "n_r": self.n_r,
                     "n_modes": self.n_modes, "n_quad": self.n_quad},
            "bubble": {"lambdas": list(map(float, self.lambdas)),
                       "epsilons": list(map(float, self.epsilons)),
                       "theta_xi": self.theta_xi,
                       "theta_grid": self.theta_grid},
            "tolerances": {"newton_tol": self.newton_tol,
                           "quad_tol": self.quad_tol,
                           "fixed_point_tol": self.fixed_point_tol},
            "alpha_diagnostic": self.alpha_diagnostic,
            "seed": self.seed,
            "output": {"dir": self.out_dir},
        }


def _get(table: dict, section: str, key: str, default, kind, errors: list):
    raw = table.get(section, {}).get(key, default) if section else \
        table.get(key, default)
    try:
        if kind is list:
            return list(raw)
        return kind(raw)
    except (TypeError, ValueError):
        errors.append(f"{section + '.' if section else ''}{key}")
        return default


def load_config(path: str) -> ExperimentConfig:
    """Parse and validate a TOML experiment configuration."""
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError("file", f"TOML parse error: {exc}") from exc
    errors: list[str] = []
    curv = data.get("curvature", {})
    try:
        K_poly = np.asarray(curv.get("K_poly", [[1.0]]), dtype=float)
    except (TypeError, ValueError):
        raise ConfigError("curvature.K_poly", "must be a numeric matrix")
    cfg = ExperimentConfig(
        K_poly=K_poly,
        kappa_a0=_get(data, "curvature", "kappa_a0", 1.0, float, errors),
        kappa_cos=_get(data, "curvature", "kappa_cos", [], list, errors),
        kappa_sin=_get(data, "curvature", "kappa_sin", [], list, errors),
        n_theta=_get(data, "grid", "n_theta", 128, int, errors),
        n_r=_get(data, "grid", "n_r", 64, int, errors),
        n_modes=_get(data, "grid", "n_modes", 512, int, errors),
        n_quad=_get(data, "grid", "n_quad", 1024, int, errors),
        lambdas=_get(data, "bubble", "lambdas", [1.0], list, errors),
        epsilons=_get(data, "bubble", "epsilons", [0.1, 0.05], list, errors),
        theta_xi=_get(data, "bubble", "theta_xi", 0.0, float, errors),
        theta_grid=_get(data, "bubble", "theta_grid", 32, int, errors),
        newton_tol=_get(data, "tolerances", "newton_tol", 1e-9, float, errors),
        quad_tol=_get(data, "tolerances", "quad_tol", 1e-8, float, errors),
        fixed_point_tol=_get(data, "tolerances", "fixed_point_tol", 1e-10,
                             float, errors),
        alpha_diagnostic=_get(data, "", "alpha_diagnostic", 0.9, float, errors),
        seed=_get(data, "", "seed", 0, int, errors),
        out_dir=str(data.get("output", {}).get("dir", "out")),
        validation_grid_size=_get(data, "curvature", "validation_grid_size",
                                  4096, int, errors),
    )
    if errors:
        raise ConfigError(errors[0], "could not parse value")
    return cfg.validate()
