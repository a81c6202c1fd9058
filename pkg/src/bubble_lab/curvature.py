"""Prescribed curvature data on the unit disc and the reduced boundary functional.

The disc is centered at (0, 1): the boundary point at angle ``theta`` is
``(sin theta, 1 - cos theta)``, so ``theta = 0`` sits at the origin where the
tangent half-plane is ``{x2 > 0}``.  The interior curvature K is a bivariate
polynomial, the boundary curvature kappa a finite Fourier series; both are
validated for positivity at construction time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import ConstantReducedFunctional, CurvatureNotPositive

DISC_CENTER = np.array([0.0, 1.0])
MAX_POLY_DEGREE = 8
MAX_FOURIER_MODES = 32


def boundary_point(theta):
    """Boundary point xi(theta) = (sin theta, 1 - cos theta); vectorized."""
    theta = np.asarray(theta, dtype=float)
    return np.stack([np.sin(theta), 1.0 - np.cos(theta)], axis=-1)


def outward_normal(theta):
    """Unit outward normal n(theta) = (sin theta, -cos theta); vectorized."""
    theta = np.asarray(theta, dtype=float)
    return np.stack([np.sin(theta), -np.cos(theta)], axis=-1)


def wrap_angle(theta: float) -> float:
    """Reduce an angle to [0, 2*pi)."""
    return float(np.mod(theta, 2.0 * np.pi))


@dataclass(frozen=True)
class BoundaryAngle:
    """Angle on the boundary circle, stored modulo 2*pi."""

    theta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    def point(self) -> np.ndarray:
        return boundary_point(self.theta)

    def normal(self) -> np.ndarray:
        return outward_normal(self.theta)

    def distance_to(self, other: "BoundaryAngle | float") -> float:
        """Shortest angular distance on the circle."""
        other_theta = other.theta if isinstance(other, BoundaryAngle) else float(other)
        d = abs(self.theta - wrap_angle(other_theta)) % (2.0 * np.pi)
        return min(d, 2.0 * np.pi - d)


def _poly_eval(coeffs: np.ndarray, x1, x2):
    """Evaluate sum_{ij} c[i,j] x1^i x2^j with Horner in both variables."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    res = np.zeros(np.broadcast(x1, x2).shape)
    for row in coeffs[::-1]:          # powers of x1, highest first
        inner = np.zeros_like(res)
        for c in row[::-1]:           # powers of x2, highest first
            inner = inner * x2 + c
        res = res * x1 + inner
    return res


def _poly_linear_substitution(coeffs: np.ndarray, m11, m12, m21, m22):
    """Coefficients of P(m11*u + m12*v, m21*u + m22*v) from P(x, y).

    The substitution mixes the variables, so the result is returned on a
    square array sized by the total degree.
    """
    deg = coeffs.shape[0] + coeffs.shape[1] - 2
    out = np.zeros((deg + 1, deg + 1))
    # (m11 u + m12 v)^i and (m21 u + m22 v)^j expanded by binomials
    for i in range(coeffs.shape[0]):
        for j in range(coeffs.shape[1]):
            c = coeffs[i, j]
            if c == 0.0:
                continue
            a = np.zeros((i + 1,))
            for k in range(i + 1):
                a[k] = math.comb(i, k) * m11 ** (i - k) * m12 ** k
            b = np.zeros((j + 1,))
            for k in range(j + 1):
                b[k] = math.comb(j, k) * m21 ** (j - k) * m22 ** k
            # term c * sum_k a[k] u^{i-k} v^k * sum_l b[l] u^{j-l} v^l
            for k in range(i + 1):
                for l in range(j + 1):  # noqa: E741
                    out[i - k + j - l, k + l] += c * a[k] * b[l]
    return out


def _poly_shift_x2(coeffs: np.ndarray, h: float):
    """Coefficients of P(x, y + h) from P(x, y)."""
    out = np.zeros_like(coeffs)
    for j in range(coeffs.shape[1]):
        for l in range(j + 1):  # noqa: E741
            out[:, l] += coeffs[:, j] * math.comb(j, l) * h ** (j - l)
    return out


@dataclass(frozen=True)
class CurvatureField:
    """Positive curvature data (K on the closed disc, kappa on the boundary).

    K_poly[i, j] multiplies x1^i x2^j (total degree at most 8).  kappa is
    a0 + sum_n (kappa_cos[n-1] cos n*theta + kappa_sin[n-1] sin n*theta),
    at most 32 modes.  Positivity is checked on construction over a
    validation grid, with local refinement wherever values dip below 1e-3.
    """

    K_poly: np.ndarray
    kappa_a0: float
    kappa_cos: np.ndarray = dc_field(default_factory=lambda: np.zeros(0))
    kappa_sin: np.ndarray = dc_field(default_factory=lambda: np.zeros(0))
    validation_grid_size: int = 4096

    def __post_init__(self):
        K = np.atleast_2d(np.asarray(self.K_poly, dtype=float))
        if K.shape[0] > MAX_POLY_DEGREE + 1 or K.shape[1] > MAX_POLY_DEGREE + 1:
            raise CurvatureNotPositive(
                f"K polynomial degree exceeds {MAX_POLY_DEGREE} per variable"
            )
        object.__setattr__(self, "K_poly", K)
        ac = np.atleast_1d(np.asarray(self.kappa_cos, dtype=float))
        bs = np.atleast_1d(np.asarray(self.kappa_sin, dtype=float))
        if max(ac.size, bs.size) > MAX_FOURIER_MODES:
            raise CurvatureNotPositive(f"kappa exceeds {MAX_FOURIER_MODES} Fourier modes")
        object.__setattr__(self, "kappa_cos", ac)
        object.__setattr__(self, "kappa_sin", bs)
        object.__setattr__(self, "kappa_a0", float(self.kappa_a0))
        self._validate_positive()

    # -- evaluation ---------------------------------------------------------

    def eval_K(self, points) -> np.ndarray:
        """K at points of shape (..., 2)."""
        pts = np.asarray(points, dtype=float)
        return _poly_eval(self.K_poly, pts[..., 0], pts[..., 1])

    def eval_kappa(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        val = np.full(theta.shape, self.kappa_a0)
        for n in range(1, self.kappa_cos.size + 1):
            val = val + self.kappa_cos[n - 1] * np.cos(n * theta)
        for n in range(1, self.kappa_sin.size + 1):
            val = val + self.kappa_sin[n - 1] * np.sin(n * theta)
        return val

    # -- validation ---------------------------------------------------------

    def _validate_positive(self):
        m = self.validation_grid_size
        if m < 64:
            raise CurvatureNotPositive("validation grid too small (need >= 64 points)")
        # interior grid: polar product covering the closed disc
        side = max(8, int(round(math.sqrt(m))))
        rr = np.linspace(0.0, 1.0, side)
        tt = np.linspace(0.0, 2.0 * np.pi, side, endpoint=False)
        R, T = np.meshgrid(rr, tt, indexing="ij")
        pts = DISC_CENTER + np.stack(
            [R * np.sin(T), -R * np.cos(T)], axis=-1
        )
        kv = self.eval_K(pts)
        self._check_min(kv.min(), "K", lambda n: self.eval_K(self._refine_disc(n)))
        th = np.linspace(0.0, 2.0 * np.pi, m, endpoint=False)
        kb = self.eval_kappa(th)
        self._check_min(kb.min(), "kappa", lambda n: self.eval_kappa(
            np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)))

    @staticmethod
    def _refine_disc(n):
        side = int(round(math.sqrt(n)))
        rr = np.linspace(0.0, 1.0, side)
        tt = np.linspace(0.0, 2.0 * np.pi, side, endpoint=False)
        R, T = np.meshgrid(rr, tt, indexing="ij")
        return DISC_CENTER + np.stack([R * np.sin(T), -R * np.cos(T)], axis=-1)

    def _check_min(self, vmin: float, name: str, refined_eval):
        if vmin <= 0.0:
            raise CurvatureNotPositive(f"{name} is not positive (min {vmin:.3e})")
        if vmin < 1e-3:
            # values close to zero: re-check on a 16x denser sample
            vref = refined_eval(16 * self.validation_grid_size).min()
            if vref <= 0.0:
                raise CurvatureNotPositive(
                    f"{name} fails positivity under refinement (min {vref:.3e})"
                )

    # -- transformations ----------------------------------------------------

    def rotated(self, beta: float) -> "CurvatureField":
        """Field rotated by beta about the disc center.

        The rotated field takes at angle theta + beta the values the original
        field took at theta.
        """
        # shift to u = x - center, substitute u -> R(-beta) u, shift back
        shifted = _poly_shift_x2(self.K_poly, DISC_CENTER[1])
        c, s = math.cos(beta), math.sin(beta)
        rotated = _poly_linear_substitution(shifted, c, s, -s, c)
        back = _poly_shift_x2(rotated, -DISC_CENTER[1])
        nc = self.kappa_cos.size
        ns = self.kappa_sin.size
        n = max(nc, ns)
        ac = np.zeros(n)
        bs = np.zeros(n)
        for k in range(1, n + 1):
            a = self.kappa_cos[k - 1] if k <= nc else 0.0
            b = self.kappa_sin[k - 1] if k <= ns else 0.0
            # cos k(theta-beta), sin k(theta-beta) recombined
            ac[k - 1] = a * math.cos(k * beta) - b * math.sin(k * beta)
            bs[k - 1] = a * math.sin(k * beta) + b * math.cos(k * beta)
        return CurvatureField(back, self.kappa_a0, ac, bs, self.validation_grid_size)


@dataclass(frozen=True)
class ReducedValue:
    """kappa + sqrt(K + kappa^2) and the offset ratio kappa / sqrt(K)."""

    phi_red: float
    D_ratio: float


def eval_curvatures(field: CurvatureField, theta: BoundaryAngle | float):
    """(K, kappa) at the boundary point xi(theta)."""
    th = theta.theta if isinstance(theta, BoundaryAngle) else float(theta)
    K = float(field.eval_K(boundary_point(th)))
    kappa = float(field.eval_kappa(th))
    return K, kappa


def eval_reduced(field: CurvatureField, theta: BoundaryAngle | float) -> ReducedValue:
    """Reduced functional value kappa + sqrt(K + kappa^2) at xi(theta)."""
    K, kappa = eval_curvatures(field, theta)
    return ReducedValue(phi_red=kappa + math.sqrt(K + kappa * kappa),
                        D_ratio=kappa / math.sqrt(K))


def reduced_profile(field: CurvatureField, thetas: np.ndarray) -> np.ndarray:
    """Vectorized phi_red over an array of angles."""
    pts = boundary_point(thetas)
    K = field.eval_K(pts)
    kap = field.eval_kappa(thetas)
    return kap + np.sqrt(K + kap * kap)


@dataclass(frozen=True)
class ReducedExtremum:
    theta: BoundaryAngle
    kind: str            # "max" | "min"
    phi_red: float


def _golden_section(f, a: float, b: float, minimize: bool, tol: float = 1e-10):
    """Golden-section search on [a, b]; returns the abscissa to width <= tol."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    sign = 1.0 if minimize else -1.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = sign * f(c), sign * f(d)
    while (b - a) > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = sign * f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = sign * f(d)
    return 0.5 * (a + b)


def find_extremum_reduced(field: CurvatureField, n_scan: int):
    """Locate all strict local extrema of phi_red on the boundary.

    Scans a uniform grid of n_scan angles, then refines each strict local
    extremum by golden-section search to |dtheta| <= 1e-10.  Raises
    ConstantReducedFunctional if max - min < 1e-12 over the scan.
    """
    if n_scan < 64:
        raise ValueError("n_scan must be at least 64")
    thetas = np.linspace(0.0, 2.0 * np.pi, n_scan, endpoint=False)
    vals = reduced_profile(field, thetas)
    if vals.max() - vals.min() < 1e-12:
        raise ConstantReducedFunctional(
            f"phi_red is constant to 1e-12 (spread {vals.max() - vals.min():.3e})"
        )
    f = lambda t: float(reduced_profile(field, np.array([t]))[0])  # noqa: E731
    h = 2.0 * np.pi / n_scan
    out = []
    for i in range(n_scan):
        vm, v0, vp = vals[i - 1], vals[i], vals[(i + 1) % n_scan]
        if v0 > vm and v0 > vp:
            kind = "max"
        elif v0 < vm and v0 < vp:
            kind = "min"
        else:
            continue
        t0 = thetas[i]
        t_star = _golden_section(f, t0 - h, t0 + h, minimize=(kind == "min"))
        out.append(ReducedExtremum(BoundaryAngle(t_star), kind, f(t_star)))
    out.sort(key=lambda e: e.theta.theta)
    return out
