"""Spectral collocation grid on the unit disc.

Fourier in the angle, Chebyshev collocation in the radius.  The radial grid
is the positive half of a Gauss-Lobatto diameter grid (odd point count, so
r = 0 is never a node); radial derivatives are folded across the center using
u(-r, theta) = u(r, theta + pi), which in Fourier space is a (-1)^m parity
factor.  Area quadrature weights are exact for the interpolant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import GridValidationFailed

PI_LD = np.longdouble("3.141592653589793238462643383279502884197")


def chebyshev_diff_matrix(N: int, dtype=np.longdouble):
    """Nodes cos(k pi / N), k = 0..N, and the differentiation matrix.

    Built in extended precision with the negative-sum trick on the diagonals
    of D and D^2: residual evaluations divide the angular term by r^2 near the
    center and amplify entry-level roundoff by O(N^4) otherwise.
    """
    k = np.arange(N + 1)
    t = np.cos(PI_LD.astype(dtype) * k.astype(dtype) / dtype(N))
    c = np.ones(N + 1, dtype=dtype)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** k
    dt = t[:, None] - t[None, :]
    np.fill_diagonal(dt, 1.0)
    D = np.outer(c, 1.0 / c) / dt
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -D.sum(axis=1))
    D2 = D @ D
    np.fill_diagonal(D2, 0.0)
    np.fill_diagonal(D2, -D2.sum(axis=1))
    return t, D, D2


def fourier_second_derivative_matrix(n: int, dtype=np.longdouble) -> np.ndarray:
    """Dense d^2/dtheta^2 on a uniform periodic grid of n points (n even)."""
    j = np.arange(n)
    diff = j[:, None] - j[None, :]
    with np.errstate(divide="ignore"):
        T2 = -np.where(diff % n == 0, dtype(0.0),
                       (-1.0) ** diff / (2.0 * np.sin(PI_LD.astype(dtype)
                                                      * diff.astype(dtype)
                                                      / dtype(n)) ** 2))
    np.fill_diagonal(T2, -dtype(n) * n / 12.0 - 1.0 / dtype(6.0))
    return T2


def _barycentric_weights_cgl(N: int) -> np.ndarray:
    w = np.ones(N + 1)
    w[1::2] = -1.0
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


@dataclass(frozen=True)
class SolverGrid:
    """Disc collocation grid with folded spectral operators and quadrature."""

    n_theta: int
    n_r: int
    r: np.ndarray
    theta: np.ndarray
    Dp: np.ndarray                     # radial derivative, same-angle block
    Dm: np.ndarray                     # radial derivative, antipodal block
    D2p: np.ndarray
    D2m: np.ndarray
    T2: np.ndarray                     # angular second derivative (dense)
    w_r: np.ndarray                    # radial area weights (with r-Jacobian)
    _bary_t: np.ndarray = dc_field(repr=False, default=None)
    _bary_w: np.ndarray = dc_field(repr=False, default=None)
    _ld: dict = dc_field(repr=False, default=None)   # longdouble masters

    # -- basic helpers --------------------------------------------------------

    @property
    def w_theta(self) -> float:
        return 2.0 * np.pi / self.n_theta

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_r, self.n_theta)

    @property
    def size(self) -> int:
        return self.n_r * self.n_theta

    def quadrature_weights(self) -> np.ndarray:
        """Per-node area weights, shape (n_r, n_theta)."""
        return np.broadcast_to(self.w_r[:, None] * self.w_theta, self.shape)

    def nodes_xy(self) -> np.ndarray:
        """Cartesian node coordinates, shape (n_r, n_theta, 2)."""
        R, T = np.meshgrid(self.r, self.theta, indexing="ij")
        return np.stack([R * np.sin(T), 1.0 - R * np.cos(T)], axis=-1)

    def boundary_xy(self) -> np.ndarray:
        return np.stack([np.sin(self.theta), 1.0 - np.cos(self.theta)], axis=-1)

    def _parity_split(self, n_modes: int):
        m = np.arange(n_modes)
        return m % 2 == 0, m

    # -- spectral derivatives --------------------------------------------------

    @staticmethod
    def _radial_apply(Mp, Mm, u: np.ndarray, n_theta: int) -> np.ndarray:
        """Apply a folded radial operator in real space."""
        shifted = np.roll(u, n_theta // 2, axis=1)
        return Mp @ u + Mm @ shifted

    def radial_derivative(self, u: np.ndarray, precise: bool = False) -> np.ndarray:
        if precise:
            return self._radial_apply(self._ld["Dp"], self._ld["Dm"],
                                      u.astype(np.longdouble), self.n_theta)
        return self._radial_apply(self.Dp, self.Dm, u, self.n_theta)

    def theta_derivative(self, u: np.ndarray) -> np.ndarray:
        uh = np.fft.rfft(u, axis=1)
        m = np.fft.rfftfreq(self.n_theta, d=1.0 / self.n_theta)
        uh *= 1j * m
        if self.n_theta % 2 == 0:
            uh[:, -1] = 0.0           # Nyquist mode has no odd derivative
        return np.fft.irfft(uh, n=self.n_theta, axis=1)

    def laplacian(self, u: np.ndarray, precise: bool = False) -> np.ndarray:
        """Discrete Laplacian u_rr + u_r / r + u_tt / r^2.

        `precise` evaluates in extended precision against the longdouble
        master matrices; the angular term near the center and the clustered
        radial rows lose ~8 digits to cancellation in plain float64.
        """
        if precise:
            return self.laplacian_ld(u.astype(np.longdouble))
        else:
            d2 = self._radial_apply(self.D2p, self.D2m, u, self.n_theta)
            d1 = self._radial_apply(self.Dp, self.Dm, u, self.n_theta)
            ang = u @ self.T2.T
            r = self.r
        return d2 + d1 / r[:, None] + ang / (r**2)[:, None]

    def laplacian_ld(self, u: np.ndarray) -> np.ndarray:
        """Laplacian of a longdouble field, all arithmetic in longdouble."""
        d2 = self._radial_apply(self._ld["D2p"], self._ld["D2m"], u, self.n_theta)
        d1 = self._radial_apply(self._ld["Dp"], self._ld["Dm"], u, self.n_theta)
        ang = u @ self._ld["T2"].T
        r = self._ld["r"]
        return d2 + d1 / r[:, None] + ang / (r**2)[:, None]

    def gradient_squared(self, u: np.ndarray) -> np.ndarray:
        ur = self.radial_derivative(u)
        ut = self.theta_derivative(u)
        return ur**2 + (ut / self.r[:, None]) ** 2

    def center_filter(self, u: np.ndarray) -> np.ndarray:
        """Project out angular modes that are unrepresentable near the center.

        A field analytic on the disc has |mode m| <= C r^m at radius r, so
        modes with r^m below roundoff (r^m < 1e-18) carry no information and
        only feed the m^2 / r^2 amplification in the Laplacian.  Removing them
        changes resolved fields by less than float64 roundoff.
        """
        uh = np.fft.rfft(u, axis=1)
        uh[~self._center_mask()] = 0.0
        return np.fft.irfft(uh, n=self.n_theta, axis=1)

    def _center_mask(self) -> np.ndarray:
        try:
            return self._mask_cache
        except AttributeError:
            m = np.arange(self.n_theta // 2 + 1)
            with np.errstate(divide="ignore"):
                cap = np.where(self.r < 1.0,
                               42.0 / np.abs(np.log(self.r)), np.inf)
            mask = m[None, :] <= np.maximum(cap, 12.0)[:, None]
            object.__setattr__(self, "_mask_cache", mask)
            return mask

    def boundary_normal_derivative(self, u: np.ndarray) -> np.ndarray:
        """du/dr on the r = 1 ring."""
        shifted = np.roll(u, self.n_theta // 2, axis=1)
        return self.Dp[0] @ u + self.Dm[0] @ shifted

    # -- interpolation / resampling --------------------------------------------

    def _radial_eval_matrices(self, r_targets: np.ndarray):
        """Barycentric evaluation on the doubled diameter grid.

        Returns (Be, Bo): maps from nodal radial values to values at r_targets
        for even / odd angular modes.
        """
        N = 2 * self.n_r - 1
        t = self._bary_t
        w = self._bary_w
        rt = np.asarray(r_targets, dtype=float)
        diff = rt[:, None] - t[None, :]
        exact = np.isclose(diff, 0.0, atol=1e-15)
        diff = np.where(exact, 1.0, diff)
        terms = w[None, :] / diff
        denom = terms.sum(axis=1)
        P = terms / denom[:, None]
        hit = exact.any(axis=1)
        P[hit] = 0.0
        P[hit, np.argmax(exact[hit], axis=1)] = 1.0
        pos = P[:, :self.n_r]
        neg = P[:, N - np.arange(self.n_r)]
        return pos + neg, pos - neg

    def interpolate(self, u: np.ndarray, r_targets, theta_targets) -> np.ndarray:
        """Field values at scattered (r, theta) points."""
        rt = np.atleast_1d(np.asarray(r_targets, dtype=float))
        tt = np.atleast_1d(np.asarray(theta_targets, dtype=float))
        c = np.fft.rfft(u, axis=1) / self.n_theta
        n_modes = c.shape[1]
        even, m = self._parity_split(n_modes)
        Be, Bo = self._radial_eval_matrices(rt)
        vals = np.empty((rt.size, n_modes), dtype=complex)
        vals[:, even] = Be @ c[:, even]
        vals[:, ~even] = Bo @ c[:, ~even]
        weights = np.full(n_modes, 2.0)
        weights[0] = 1.0
        if self.n_theta % 2 == 0:
            weights[-1] = 1.0
        phase = np.exp(1j * np.outer(tt, m))
        return (vals * phase * weights).real.sum(axis=1)

    def resample(self, u: np.ndarray, r_targets: np.ndarray,
                 n_theta_fine: int) -> np.ndarray:
        """Spectral resampling onto a product grid (r_targets x uniform angles)."""
        c = np.fft.rfft(u, axis=1) / self.n_theta
        n_modes = c.shape[1]
        even, _ = self._parity_split(n_modes)
        Be, Bo = self._radial_eval_matrices(np.asarray(r_targets, dtype=float))
        cf = np.empty((len(r_targets), n_modes), dtype=complex)
        cf[:, even] = Be @ c[:, even]
        cf[:, ~even] = Bo @ c[:, ~even]
        if self.n_theta % 2 == 0:
            cf[:, -1] *= 0.5          # split Nyquist for zero-padded transform
        pad = np.zeros((len(r_targets), n_theta_fine // 2 + 1), dtype=complex)
        pad[:, :n_modes] = cf
        return np.fft.irfft(pad, n=n_theta_fine, axis=1) * n_theta_fine

    def trace_interpolated(self, u: np.ndarray) -> np.ndarray:
        """Boundary trace via interpolation (coincides with the r=1 ring)."""
        return self.resample(u, np.array([1.0]), self.n_theta)[0]


def _radial_area_weights(r: np.ndarray, N: int) -> np.ndarray:
    """Weights w with sum_i w_i q(r_i^2) = (1/2) int_0^1 q(s) ds for
    polynomials q of degree < n_r (covers the interpolant's even part)."""
    n_r = r.size
    x = 2.0 * r**2 - 1.0                       # = cos(2 pi k / N)
    kk = np.arange(n_r)
    M = np.cos(np.outer(kk, np.arccos(np.clip(x, -1.0, 1.0))))
    rhs = np.zeros(n_r)
    for k in range(0, n_r, 2):
        rhs[k] = 0.25 * 2.0 / (1.0 - k * k) if k != 1 else 0.0
    return np.linalg.solve(M, rhs)


def build_grid(n_theta: int, n_r: int) -> SolverGrid:
    """Construct and self-validate a disc grid.

    Checks: harmonic monomials r^n cos(n theta) are annihilated by the
    discrete Laplacian (n up to n_theta / 4), the boundary-normal derivative
    of r cos(theta) is cos(theta), and the area quadrature reproduces pi.
    """
    if n_theta < 64 or n_theta % 2:
        raise GridValidationFailed("n_theta must be even and at least 64")
    if n_r < 48:
        raise GridValidationFailed("n_r must be at least 48")
    N = 2 * n_r - 1
    t, D, D2 = chebyshev_diff_matrix(N)
    r = t[:n_r]
    cols = N - np.arange(n_r)
    T2 = fourier_second_derivative_matrix(n_theta)
    ld = {
        "Dp": D[:n_r, :n_r], "Dm": D[:n_r, cols],
        "D2p": D2[:n_r, :n_r], "D2m": D2[:n_r, cols],
        "T2": T2, "r": r,
    }
    grid = SolverGrid(
        n_theta=n_theta,
        n_r=n_r,
        r=r.astype(float),
        theta=2.0 * np.pi * np.arange(n_theta) / n_theta,
        Dp=ld["Dp"].astype(float),
        Dm=ld["Dm"].astype(float),
        D2p=ld["D2p"].astype(float),
        D2m=ld["D2m"].astype(float),
        T2=T2.astype(float),
        w_r=_radial_area_weights(r.astype(float), N),
        _bary_t=t.astype(float),
        _bary_w=_barycentric_weights_cgl(N),
        _ld=ld,
    )
    _validate(grid)
    return grid


def _validate(g: SolverGrid):
    checks = []
    theta_ld = 2.0 * PI_LD * np.arange(g.n_theta) / np.longdouble(g.n_theta)
    r_ld = g._ld["r"]
    for n in sorted({1, 2, max(4, g.n_theta // 4)}):
        u = r_ld[:, None] ** n * np.cos(n * theta_ld[None, :])
        res = np.abs(g.laplacian_ld(u)).max()
        checks.append((f"laplacian_harmonic_n{n}", res, 1e-8))
    u = g.r[:, None] * np.cos(g.theta[None, :])
    res = np.abs(g.boundary_normal_derivative(u) - np.cos(g.theta)).max()
    checks.append(("boundary_normal_r_cos", res, 1e-10))
    area = float(np.sum(g.quadrature_weights()))
    checks.append(("area_of_disc", abs(area - math.pi), 1e-10))
    for name, value, tol in checks:
        if not value <= tol:
            raise GridValidationFailed(f"{name}: residual {value:.3e} > {tol:g}")
