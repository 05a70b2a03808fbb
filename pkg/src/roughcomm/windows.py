"""Smooth radial windows: the cutoff phi, the Littlewood-Paley function psi,
the annular partition varpi and the moment-cancelling mollifier omega.

All four are built from the compactly supported bump
``b(r) = exp(1 - 1/(1 - r^2))`` (``b(0) = 1``, support ``[0, 1)``).  Fourier
transforms of radial profiles are *transfer functions*
``F(rho) = 2 pi * int_0^R f(r) J0(rho r) r dr`` (``F(0) = integral of f``), so
a convolution with ``f`` acts on frequencies as multiplication by ``F``.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, interpolate, special

from .grid import BoxGrid, GridFunction

__all__ = [
    "bump",
    "smooth_step",
    "phi_profile",
    "varphi_profile",
    "BumpTransform",
    "WindowFamily",
    "build_windows",
    "radial_transfer_quadrature",
]


def bump(r):
    """``exp(1 - 1/(1 - r^2))`` on ``|r| < 1``, zero elsewhere."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    m = np.abs(r) < 1
    q = 1.0 - r[m] ** 2
    out[m] = np.exp(1.0 - 1.0 / q)
    return out


def bump_laplacian(r):
    """Two-dimensional Laplacian of the radial bump, as a radial profile."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    # below q = 1e-3 the bump underflows to zero; skip to avoid 0 * inf
    m = (1.0 - r**2) > 1e-3
    rr = r[m] ** 2
    q = 1.0 - rr
    out[m] = np.exp(1.0 - 1.0 / q) * (-4.0 / q**2 - 8.0 * rr / q**3 + 4.0 * rr / q**4)
    return out


def smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1, monotone in between."""
    t = np.asarray(t, dtype=float)
    out = np.where(t >= 1, 1.0, 0.0)
    m = (t > 0) & (t < 1)
    tm = t[m]
    a = np.exp(-1.0 / tm)
    b = np.exp(-1.0 / (1.0 - tm))
    out[m] = a / (a + b)
    return out


def phi_profile(r):
    """Smooth plateau: 1 on ``[0, 1]``, 0 on ``[2, inf)``."""
    return 1.0 - smooth_step(np.asarray(r, dtype=float) - 1.0)


def varphi_profile(r):
    """``phi(r) - phi(2r)``: supported in ``[1/2, 2]``; its dyadic dilates sum to 1."""
    r = np.asarray(r, dtype=float)
    return phi_profile(r) - phi_profile(2.0 * r)


def _gauss_legendre(npts: int, a: float = 0.0, b: float = 1.0):
    x, w = np.polynomial.legendre.leggauss(npts)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


def radial_transfer_quadrature(profile, rho, support: float = 1.0, npts: int = 2000):
    """Direct Gauss-Legendre evaluation of ``2 pi int_0^R f(r) J0(rho r) r dr``.

    Independent of the tabulated path; used as a reference and for
    one-off evaluations.
    """
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    r, w = _gauss_legendre(npts, 0.0, support)
    fw = 2.0 * np.pi * profile(r) * r * w
    out = np.empty_like(rho)
    for start in range(0, rho.size, 512):
        chunk = rho.ravel()[start : start + 512]
        out.ravel()[start : start + 512] = np.sum(special.j0(np.outer(chunk, r)) * fw, axis=1)
    return out


def _series(moments: np.ndarray, rho):
    # J0(z) = sum (-1)^m (z/2)^(2m) / (m!)^2
    rho = np.asarray(rho, dtype=float)
    z2 = (0.5 * rho) ** 2
    total = np.zeros_like(rho)
    term = np.ones_like(rho)
    for m, mom in enumerate(moments):
        if m > 0:
            term = term * (-z2) / (m * m)
        total = total + term * mom
    return total


class BumpTransform:
    """Transfer function of the bump, ``bhat(z) = 2 pi int_0^1 b(r) J0(z r) r dr``.

    Small arguments use the Bessel power series with exact moments; larger
    ones a cubic spline through quadrature values.  Beyond ``z_max`` the
    transform is below 1e-14 and is returned as zero.
    """

    z_series = 4.0
    z_max = 800.0
    n_moments = 40

    def __init__(self):
        r, w = _gauss_legendre(1000)
        br = bump(r)
        # radial moments  M_2m = 2 pi int b r^(2m) r dr
        self.moments = np.array(
            [2.0 * np.pi * np.sum(br * r ** (2 * m + 1) * w) for m in range(self.n_moments)]
        )
        segments = [(0.0, 40.0, 0.01, 120), (40.0, 300.0, 0.02, 400), (300.0, self.z_max, 0.1, 1000)]
        zs, vals = [], []
        for lo, hi, dz, npts in segments:
            z = np.arange(lo, hi, dz)
            zs.append(z)
            vals.append(radial_transfer_quadrature(bump, z, 1.0, npts))
        z = np.concatenate(zs + [np.array([self.z_max])])
        v = np.concatenate(vals + [radial_transfer_quadrature(bump, [self.z_max], 1.0, 1000)])
        self._spline = interpolate.CubicSpline(z, v)

    def __call__(self, z):
        z = np.abs(np.asarray(z, dtype=float))
        out = np.zeros_like(z)
        small = z <= self.z_series
        mid = (~small) & (z <= self.z_max)
        out[small] = _series(self.moments, z[small])
        out[mid] = self._spline(z[mid])
        return out

    def moment(self, m: int) -> float:
        """``2 pi int b(r) r^(2m) r dr``."""
        return float(self.moments[m])


@functools.lru_cache(maxsize=1)
def bump_transform() -> BumpTransform:
    return BumpTransform()


def _log_mesh_integral(fn, lo=1e-3, hi=800.0, npts=4001):
    u = np.linspace(np.log(lo), np.log(hi), npts)
    return float(integrate.simpson(fn(np.exp(u)), x=u))


def reproducing_integral(psi_hat, npts: int = 4001) -> float:
    """``int_0^inf psi_hat(s)^4 ds/s`` on a log-spaced mesh (Simpson in ``log s``)."""
    return _log_mesh_integral(lambda s: psi_hat(s) ** 4, npts=npts)


@dataclass(frozen=True, eq=False)
class WindowFamily:
    """The four windows for moment order ``k``.

    ``psi_scale`` is the constant ``c`` in ``psi = c * Laplacian(bump)``;
    ``omega_radii`` / ``omega_coeffs`` define
    ``omega(r) = sum_i coeff_i * bump(r / radius_i)``.
    """

    k: int
    psi_scale: float
    omega_radii: tuple[float, ...]
    omega_coeffs: tuple[float, ...]
    grid: BoxGrid | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    # --- phi, the plateau cutoff, and its dyadic pieces -------------------
    def phi(self, r):
        return phi_profile(r)

    def varphi(self, r):
        return varphi_profile(r)

    def varphi_j(self, r, j: int):
        return varphi_profile(np.asarray(r, dtype=float) * 2.0 ** (-j))

    # --- psi: mean zero, supp in the unit ball ----------------------------
    def psi(self, r):
        return self.psi_scale * bump_laplacian(r)

    def psi_hat(self, rho):
        rho = np.asarray(rho, dtype=float)
        return -self.psi_scale * rho**2 * bump_transform()(rho)

    def psi_s(self, grid: BoxGrid, s: float) -> GridFunction:
        """Samples of ``psi_s(x) = s^-2 psi(x / s)`` with the discrete mean removed.

        The correction subtracts a multiple of the sampled ``bump(|x|/s)`` so the
        lattice sum is zero to rounding while the support stays in ``B(0, s)``.
        """
        key = ("psi_s", grid, float(s))
        if key not in self._cache:
            r = grid.radius() / s
            vals = self.psi(r) / s**2
            b = bump(r)
            vals = vals - b * (np.sum(vals) / np.sum(b))
            self._cache[key] = GridFunction(grid, vals)
        return self._cache[key]

    # --- varpi: annular partition sum_l varpi^3(2^-l rho) = 1 -------------
    @staticmethod
    def varpi0(rho):
        rho = np.asarray(rho, dtype=float)
        out = np.zeros_like(rho)
        m = (rho > 0.25) & (rho < 4.0)
        out[m] = bump(0.5 * np.log2(rho[m]))
        return out

    @staticmethod
    def _cube_sum_log(u):
        fl = np.floor(u)
        total = np.zeros_like(u)
        for off in range(-2, 3):
            total = total + bump(0.5 * (u - (fl + off))) ** 3
        return total

    def varpi(self, rho):
        rho = np.asarray(rho, dtype=float)
        out = np.zeros_like(rho)
        m = (rho > 0.25) & (rho < 4.0)
        u = np.log2(rho[m])
        out[m] = bump(0.5 * u) / np.cbrt(self._cube_sum_log(u))
        return out

    # --- omega: mollifier with vanishing moments up to order k ------------
    def omega(self, r):
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        for rad, c in zip(self.omega_radii, self.omega_coeffs):
            out = out + c * bump(r / rad)
        return out

    def omega_radial_moment(self, m: int) -> float:
        """``int |x|^(2m) omega(x) dx``."""
        bt = bump_transform()
        return float(
            sum(c * rad ** (2 * m + 2) * bt.moment(m) for rad, c in zip(self.omega_radii, self.omega_coeffs))
        )

    def omega_hat(self, rho):
        rho = np.asarray(rho, dtype=float)
        bt = bump_transform()
        out = np.zeros_like(rho)
        for rad, c in zip(self.omega_radii, self.omega_coeffs):
            out = out + c * rad**2 * bt(rho * rad)
        return out

    def omega_defect(self, rho):
        """``1 - omega_hat(rho)`` without cancellation near ``rho = 0``."""
        rho = np.abs(np.asarray(rho, dtype=float))
        out = np.empty_like(rho)
        rmax = max(self.omega_radii)
        small = rho * rmax <= BumpTransform.z_series
        moments = self._cache.get("omega_moments")
        if moments is None:
            moments = np.array([self.omega_radial_moment(m) for m in range(BumpTransform.n_moments)])
            moments[0] = 0.0
            self._cache["omega_moments"] = moments
        out[small] = -_series(moments, rho[small])
        out[~small] = 1.0 - self.omega_hat(rho[~small])
        return out

    @property
    def omega_support(self) -> float:
        return max(self.omega_radii)


@functools.lru_cache(maxsize=None)
def _psi_scale() -> float:
    bt = bump_transform()
    unscaled = reproducing_integral(lambda s: s**2 * bt(s))
    return unscaled ** (-0.25)


def _omega_coefficients(k: int):
    nb = 1 + k // 2
    radii = tuple(0.25 * 2.0 ** (-i) for i in range(nb))
    bt = bump_transform()
    A = np.array([[rad ** (2 * m + 2) * bt.moment(m) for rad in radii] for m in range(nb)])
    rhs = np.zeros(nb)
    rhs[0] = 1.0
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > 1e12:
        raise ValueError(f"mollifier moment system is singular for k={k} (condition {cond:.3g})")
    coeffs = np.linalg.solve(A, rhs)
    return radii, tuple(float(c) for c in coeffs)


def build_windows(k: int = 1, grid: BoxGrid | None = None) -> WindowFamily:
    """Construct the window family for moment order ``k``.

    ``omega`` is a single nonnegative bump for ``k = 1``; for ``k >= 2`` it is a
    signed combination of ``1 + k // 2`` nested bumps whose even radial moments
    of order ``2..k`` vanish.
    """
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise ValueError(f"moment order k must be a positive integer, got {k!r}")
    radii, coeffs = _omega_coefficients(int(k))
    return WindowFamily(int(k), _psi_scale(), radii, coeffs, grid)


def gradient_sup(profile, lo: float, hi: float, npts: int = 200001) -> float:
    """Max absolute finite-difference slope of a 1-D profile on ``[lo, hi]``."""
    r = np.linspace(lo, hi, npts)
    v = profile(r)
    return float(np.max(np.abs(np.diff(v))) / (r[1] - r[0]))

