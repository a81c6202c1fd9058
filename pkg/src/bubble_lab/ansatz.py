"""Corrected approximation: flux split, compatibility constant, harmonic
correction, and the interior/boundary error fields with their weighted norms.

On the unit circle |x - xi|^2 = 4 sin^2(dtheta/2) =: S and
(x - xi) . n(x) = S / 2, so every boundary quantity reduces to a rational
function of S; those stable forms are used throughout.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .bubbles import (BubbleParams, WeightedNormReport, disc_bubble_center,
                      eval_disc_bubble, weighted_norms)
from .curvature import CurvatureField, boundary_point, eval_curvatures
from .errors import FluxNotCompatible, QuadratureNotConverged
from .quadrature import graded_circle_rule

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FluxDecomposition:
    """Boundary flux split I1 + I2, mollifier, and the compatibility constant d.

    Sampled on the graded quadrature nodes used to compute d; `compat_residual`
    is the quadrature value of int(I1 + I2 - d * mollifier), zero by
    construction of d up to roundoff.
    """

    theta_nodes: np.ndarray
    weights: np.ndarray
    I1: np.ndarray
    I2: np.ndarray
    mollifier: np.ndarray
    d: float
    compat_residual: float
    int_abs_I1: float


@dataclass(frozen=True)
class HarmonicCorrection:
    """Harmonic field with boundary-normal derivative matching the flux data.

    Stores the Neumann-data Fourier coefficients (a_n, b_n for n >= 1); the
    harmonic extension is sum_n r^n (a_n cos + b_n sin) / n, which carries no
    n = 0 mode and therefore integrates to zero over the disc.
    """

    fourier_cos: np.ndarray
    fourier_sin: np.ndarray
    n_modes: int

    def _zeta(self, points):
        pts = np.asarray(points, dtype=float)
        # zeta = rho e^{i theta} in the disc's own polar frame
        return (1.0 - pts[..., 1]) + 1j * pts[..., 0]

    def eval(self, points):
        """H0 at interior points (shape (..., 2))."""
        z = self._zeta(points)
        c = (self.fourier_cos - 1j * self.fourier_sin) / np.arange(
            1, self.n_modes + 1)
        acc = np.zeros_like(z)
        for cn in c[::-1]:
            acc = (acc + cn) * z
        return acc.real

    def eval_gradient(self, points):
        """Exact gradient of H0 (holomorphic differentiation)."""
        z = self._zeta(points)
        c = self.fourier_cos - 1j * self.fourier_sin
        acc = np.zeros_like(z)
        for cn in c[::-1]:
            acc = acc * z + cn
        # dH0/dx = Re(G'(z) dz/dx) with dz/dx1 = i, dz/dx2 = -1
        return np.stack([(1j * acc).real, -acc.real], axis=-1)

    def neumann_series(self, theta):
        """Truncated Neumann data sum_n (a_n cos n t + b_n sin n t)."""
        theta = np.asarray(theta, dtype=float)
        n = np.arange(1, self.n_modes + 1)
        return (np.cos(np.multiply.outer(theta, n)) @ self.fourier_cos
                + np.sin(np.multiply.outer(theta, n)) @ self.fourier_sin)


@dataclass(frozen=True)
class AnsatzField:
    """Composite approximation: bubble + harmonic correction + 2 ln eps."""

    bubble: BubbleParams
    field: CurvatureField
    correction: HarmonicCorrection
    flux: FluxDecomposition

    @property
    def epsilon(self) -> float:
        return self.bubble.epsilon

    @property
    def lam(self) -> float:
        return self.bubble.lam

    def curvatures_at_xi(self):
        return eval_curvatures(self.field, self.bubble.theta_xi)

    def D_ratio(self) -> float:
        K, kap = self.curvatures_at_xi()
        return kap / math.sqrt(K)

    # -- x-variable evaluation ------------------------------------------------

    def eval_U(self, x):
        """Second approximation U = U0 + H0 on the closed disc."""
        return eval_disc_bubble(self.bubble, self.field, x) + self.correction.eval(x)

    def eval_V(self, y):
        """Blown-up approximation V(y) = U(eps y) + 2 ln eps."""
        y = np.asarray(y, dtype=float)
        return self.eval_U(self.epsilon * y) + 2.0 * math.log(self.epsilon)

    # -- boundary flux pieces (stable S-forms) ---------------------------------

    def _s_chord(self, theta):
        dt = np.asarray(theta, dtype=float) - self.bubble.theta_xi.theta
        return 4.0 * np.sin(0.5 * dt) ** 2

    def flux_pieces(self, theta):
        """(I1, I2, mollifier) at boundary angles theta."""
        K, kap = self.curvatures_at_xi()
        D = kap / math.sqrt(K)
        le = self.lam * self.epsilon
        S = self._s_chord(theta)
        den = le**2 * (1.0 + D * D) + S * (1.0 + D * le)
        I1 = -le * (D * S + (1.0 + D * D) * le) / den
        I2 = D * le * S / den
        moll = le**2 / (le**2 + S)
        return I1, I2, moll

    def g_exact(self, theta):
        """Neumann data I1 + I2 - d * mollifier in closed form."""
        I1, I2, moll = self.flux_pieces(theta)
        return I1 + I2 - self.flux.d * moll

    def g_tail(self, theta):
        """Part of the Neumann data beyond the resolved Fourier modes."""
        return self.g_exact(theta) - self.correction.neumann_series(theta)

    # -- error fields (y-variables, exact closed forms) ------------------------

    def _rho2_y(self, y):
        y = np.asarray(y, dtype=float)
        c = disc_bubble_center(self.bubble, self.field) / self.epsilon
        return (y[..., 0] - c[0]) ** 2 + (y[..., 1] - c[1]) ** 2

    def R1(self, y):
        """Interior error Lap(V) + K(eps y) e^{2V} at blown-up points y.

        Equals e^{2(U0 + 2 ln eps)} (K(x) e^{2 H0} - K(xi)) because the bubble
        solves the frozen-coefficient problem exactly and H0 is harmonic.
        """
        y = np.asarray(y, dtype=float)
        x = self.epsilon * y
        K_xi, _ = self.curvatures_at_xi()
        rho2 = self._rho2_y(y)
        prof = 4.0 * self.lam**2 / (K_xi * (self.lam**2 + rho2) ** 2)
        return prof * (self.field.eval_K(x) * np.exp(2.0 * self.correction.eval(x))
                       - K_xi)

    def R2(self, y_theta):
        """Boundary error -dV/dn - eps + kappa(eps y) e^V at boundary angles.

        Three exact pieces: the curvature/correction mismatch against the
        bubble trace, the mollifier term carrying d, and the unresolved
        Neumann-data tail.
        """
        theta = np.asarray(y_theta, dtype=float)
        x = boundary_point(theta)
        y = x / self.epsilon
        K_xi, kap_xi = self.curvatures_at_xi()
        rho2 = self._rho2_y(y)
        trace = 2.0 * self.lam / (math.sqrt(K_xi) * (self.lam**2 + rho2))
        mismatch = trace * (self.field.eval_kappa(theta)
                            * np.exp(self.correction.eval(x)) - kap_xi)
        xi_p = self.bubble.theta_xi.point() / self.epsilon
        r2 = (y[..., 0] - xi_p[0]) ** 2 + (y[..., 1] - xi_p[1]) ** 2
        moll_y = self.lam**2 / (self.lam**2 + r2)
        return (mismatch + self.epsilon * self.flux.d * moll_y
                + self.epsilon * self.g_tail(theta))


def compute_flux(field: CurvatureField, p: BubbleParams,
                 n_quad: int = 1024) -> FluxDecomposition:
    """Boundary flux decomposition and the compatibility constant d.

    Integrates on a composite Gauss panel rule graded dyadically toward xi at
    scale lam*eps/8; d is fixed so that int(I1 + I2 - d*mollifier) vanishes.
    Recomputes at doubled panel order and raises QuadratureNotConverged if the
    two levels disagree by more than 1e-8.
    """
    if n_quad < 512:
        raise ValueError("n_quad must be at least 512")
    scale = p.lam * p.epsilon
    shell = AnsatzField(p, field,
                        HarmonicCorrection(np.zeros(1), np.zeros(1), 1),
                        _EMPTY_FLUX)
    results = []
    for level in (0, 1):
        n_gl = max(16, n_quad // 40) * (2 ** level)
        nodes, w = graded_circle_rule(p.theta_xi.theta, scale, n_gl=n_gl)
        I1, I2, moll = shell.flux_pieces(nodes)
        num = float(w @ (I1 + I2))
        den = float(w @ moll)
        results.append((num / den, nodes, w, I1, I2, moll))
    if abs(results[0][0] - results[1][0]) > 1e-8:
        raise QuadratureNotConverged(
            f"d moved by {abs(results[0][0] - results[1][0]):.2e} under refinement"
        )
    d, nodes, w, I1, I2, moll = results[1]
    compat = float(w @ (I1 + I2 - d * moll))
    return FluxDecomposition(theta_nodes=nodes, weights=w, I1=I1, I2=I2,
                             mollifier=moll, d=d, compat_residual=compat,
                             int_abs_I1=float(w @ np.abs(I1)))


_EMPTY_FLUX = FluxDecomposition(np.zeros(0), np.zeros(0), np.zeros(0),
                                np.zeros(0), np.zeros(0), 0.0, 0.0, 0.0)


def solve_H0(field: CurvatureField, p: BubbleParams, flux: FluxDecomposition,
             n_modes: int = 256, fft_size: int | None = None) -> HarmonicCorrection:
    """Harmonic correction from the flux data by Fourier transform.

    The Neumann data g = I1 + I2 - d*mollifier is sampled on a uniform grid
    large enough to resolve the eps-scale peak, transformed, and the first
    n_modes coefficients kept.  Raises FluxNotCompatible when the transform
    mean exceeds 1e-8; warns when the kept spectrum has not decayed to 1e-8
    of its largest coefficient.
    """
    shell = AnsatzField(p, field,
                        HarmonicCorrection(np.zeros(1), np.zeros(1), 1), flux)
    if fft_size is None:
        # aliasing onto mode n_modes decays like exp(-(M - n_modes) * lam * eps)
        need = int(n_modes + 30.0 / (p.lam * p.epsilon))
        fft_size = max(8192, 1 << int(math.ceil(math.log2(need))))
    theta = 2.0 * np.pi * np.arange(fft_size) / fft_size
    g = shell.g_exact(theta)
    ghat = np.fft.rfft(g) / fft_size
    mean = abs(float(ghat[0].real))
    if mean > 1e-8:
        raise FluxNotCompatible(f"Neumann data has mean {mean:.3e}")
    a = 2.0 * ghat[1:n_modes + 1].real
    b = -2.0 * ghat[1:n_modes + 1].imag
    mag = np.hypot(a, b)
    top = mag.max() if mag.size else 0.0
    tail_frac = mag[-max(1, n_modes // 10):].max() / top if top > 0 else 0.0
    if tail_frac >= 1e-8:
        logger.warning("flux spectrum tail is %.2e of its peak at n_modes=%d",
                       tail_frac, n_modes)
    return HarmonicCorrection(fourier_cos=a, fourier_sin=b, n_modes=n_modes)


def build_ansatz(field: CurvatureField, p: BubbleParams, n_quad: int = 1024,
                 n_modes: int = 256) -> AnsatzField:
    """Assemble the full corrected approximation for one parameter set."""
    flux = compute_flux(field, p, n_quad)
    corr = solve_H0(field, p, flux, n_modes)
    return AnsatzField(bubble=p, field=field, correction=corr, flux=flux)


def eval_ansatz(a: AnsatzField, y) -> np.ndarray:
    """V(y) = U0(eps y) + H0(eps y) + 2 ln eps."""
    return a.eval_V(y)


def error_sample_sets(a: AnsatzField, n_dirs: int = 48):
    """Sampling sets for the weighted norms: a polar sweep of the disc with
    dyadic radial refinement toward the boundary plus graded boundary nodes,
    all mapped to the blown-up variables."""
    eps = a.epsilon
    scale = a.lam * eps
    theta, _ = graded_circle_rule(a.bubble.theta_xi.theta, scale, n_gl=6)
    theta = theta[:: max(1, len(theta) // (8 * n_dirs))]
    depths = [0.0]
    s = scale / 8.0
    while s < 1.0:
        depths.append(s)
        s *= 2.0
    depths += list(np.linspace(0.05, 0.95, 10))
    r = np.clip(1.0 - np.asarray(sorted(set(depths))), 0.0, 1.0)
    R, T = np.meshgrid(r, theta, indexing="ij")
    x = np.stack([R * np.sin(T), 1.0 - R * np.cos(T)], axis=-1).reshape(-1, 2)
    y_int = x / eps
    bd_theta, _ = graded_circle_rule(a.bubble.theta_xi.theta, scale, n_gl=10)
    y_bd = boundary_point(bd_theta) / eps
    return y_int, bd_theta, y_bd


def eval_errors(a: AnsatzField, alpha: float = 0.9):
    """Sample R1, R2 over the standard sets and report their weighted norms."""
    y_int, bd_theta, y_bd = error_sample_sets(a)
    r1 = a.R1(y_int)
    r2 = a.R2(bd_theta)
    xi_prime = a.bubble.theta_xi.point() / a.epsilon
    report = weighted_norms(y_int, r1, y_bd, r2, xi_prime, alpha_used=alpha)
    return r1, r2, report
