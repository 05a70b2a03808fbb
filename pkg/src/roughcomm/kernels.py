"""Rough angular kernels on the circle and their dyadic pieces.

An :class:`AngularKernel` stores ``M`` samples of ``Omega`` at the angles
``2 pi i / M`` and is evaluated between samples by periodic linear
interpolation.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate

from .grid import BoxGrid, GridFunction
from .windows import varphi_profile

logger = logging.getLogger(__name__)

__all__ = [
    "AngularKernel",
    "constant_kernel",
    "harmonic_kernel",
    "power_log_kernel",
    "load_kernel_file",
    "project_vanishing_moments",
    "angular_moments",
    "gs_beta_functional",
    "gs_beta_details",
    "GSBetaResult",
    "DyadicKernel",
    "resolvable_j_range",
    "dyadic_kernel_values",
    "make_dyadic_kernel",
]

DEFAULT_SAMPLES = 4096


@dataclass(frozen=True, eq=False)
class AngularKernel:
    samples: np.ndarray = field(repr=False)
    moment_order: int = 1
    label: str = ""

    def __post_init__(self):
        s = np.array(self.samples, dtype=float).ravel()
        if s.size < 8:
            raise ValueError("an angular kernel needs at least 8 samples")
        if not np.all(np.isfinite(s)):
            raise ValueError("angular kernel samples must be finite")
        if int(self.moment_order) < 1:
            raise ValueError("moment order must be a positive integer")
        s.flags.writeable = False
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "moment_order", int(self.moment_order))

    @property
    def M(self) -> int:
        return self.samples.size

    @property
    def angles(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.M) / self.M

    def __call__(self, theta):
        t = np.mod(np.asarray(theta, dtype=float), 2.0 * np.pi)
        pos = t * (self.M / (2.0 * np.pi))
        i0 = np.floor(pos).astype(np.int64)
        frac = pos - i0
        i0 %= self.M
        i1 = (i0 + 1) % self.M
        return (1.0 - frac) * self.samples[i0] + frac * self.samples[i1]

    def l1_norm(self) -> float:
        """``int |Omega|`` over the circle (exact for the interpolant of ``|samples|``)."""
        return float(np.sum(np.abs(self.samples)) * 2.0 * np.pi / self.M)

    def scaled(self, c: float) -> "AngularKernel":
        return AngularKernel(c * self.samples, self.moment_order, self.label)

    def with_order(self, k: int) -> "AngularKernel":
        return AngularKernel(self.samples, k, self.label)

    @property
    def is_zero(self) -> bool:
        return not np.any(self.samples)


def constant_kernel(value: float = 1.0, M: int = DEFAULT_SAMPLES, k: int = 1) -> AngularKernel:
    return AngularKernel(np.full(M, float(value)), k, f"constant({value:g})")


def harmonic_kernel(m: int, kind: str = "cos", M: int = DEFAULT_SAMPLES, k: int = 1) -> AngularKernel:
    t = 2.0 * np.pi * np.arange(M) / M
    if kind == "cos":
        vals = np.cos(m * t)
    elif kind == "sin":
        vals = np.sin(m * t)
    else:
        raise ValueError(f"harmonic kind must be 'cos' or 'sin', got {kind!r}")
    return AngularKernel(vals, k, f"{kind}({m}theta)")


def power_log_kernel(
    alpha: float = 0.5,
    lam: float = 0.0,
    theta0: float = 0.0,
    cap: float = 1e3,
    M: int = DEFAULT_SAMPLES,
    k: int = 1,
) -> AngularKernel:
    """``min(cap, d^-alpha * log^-lam(e pi / d))`` with ``d`` the angular distance to ``theta0``."""
    t = 2.0 * np.pi * np.arange(M) / M
    d = np.abs(np.angle(np.exp(1j * (t - theta0))))
    with np.errstate(divide="ignore"):
        vals = d ** (-alpha) * np.log(np.e * np.pi / d) ** (-lam)
    vals = np.where(d == 0, cap, np.minimum(vals, cap))
    return AngularKernel(vals, k, f"power_log({alpha:g},{lam:g})")


def load_kernel_file(path, k: int = 1) -> AngularKernel:
    """Read ``M`` reals (one per line, ``Omega(2 pi i / M)``) and project out order-``k`` moments."""
    path = Path(path)
    vals = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            v = float(line)
        except ValueError:
            raise ValueError(f"{path}:{lineno}: not a real number: {line!r}") from None
        if not math.isfinite(v):
            raise ValueError(f"{path}:{lineno}: non-finite sample")
        vals.append(v)
    raw = AngularKernel(np.array(vals), k, f"file({path.name})")
    return project_vanishing_moments(raw)


def _moment_frequencies(k: int):
    # span{theta^gamma : |gamma| = k} = span{cos(m t), sin(m t) : m = k, k-2, ... >= 0}
    return list(range(k % 2, k + 1, 2))


def project_vanishing_moments(raw: AngularKernel, k: int | None = None) -> AngularKernel:
    """Remove the L2(S^1) projection of ``Omega`` onto the degree-``k`` monomials.

    The projection is orthogonal for the trapezoid inner product on the sample
    angles, so the trapezoid moments of the result vanish to rounding.  Since
    the removed span is a set of whole circular harmonics, the moments of the
    piecewise-linear interpolant vanish as well.
    """
    k = raw.moment_order if k is None else int(k)
    M = raw.M
    if M < 64 or M <= 4 * k:
        raise ValueError(f"M = {M} samples cannot resolve order-{k} moments (need M >= max(64, 4k+1))")
    t = raw.angles
    s = raw.samples
    out = s.copy()
    for m in _moment_frequencies(k):
        if m == 0:
            out = out - np.mean(s)
            continue
        c, sn = np.cos(m * t), np.sin(m * t)
        out = out - (2.0 / M) * (np.sum(s * c) * c + np.sum(s * sn) * sn)
    return AngularKernel(out, k, raw.label)


def angular_moments(omega: AngularKernel, k: int | None = None) -> np.ndarray:
    """Trapezoid moments ``int Omega(t) cos^a(t) sin^b(t) dt`` for ``a + b = k``."""
    k = omega.moment_order if k is None else int(k)
    t = omega.angles
    c, s = np.cos(t), np.sin(t)
    w = 2.0 * np.pi / omega.M
    return np.array([np.sum(omega.samples * c ** (k - b) * s**b) * w for b in range(k + 1)])


# ---------------------------------------------------------------------------
# grand-maximal log integrability functional
# ---------------------------------------------------------------------------

_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


def _log_weight(u, beta):
    c = np.abs(np.cos(u))
    with np.errstate(divide="ignore"):
        return (-np.log(np.minimum(c, 1.0))) ** beta


def _nearest_singularity(c):
    # zeros of cos(u) are at pi/2 + m pi
    return np.pi / 2 + np.pi * np.round((c - np.pi / 2) / np.pi)


class _HatIntegrals:
    """``G(c) = int_{-D}^{D} (1 - |u|/D) g(u + c) du`` with ``g = log^beta(1/|cos|)``."""

    def __init__(self, delta: float, beta: float):
        self.delta = delta
        self.beta = beta
        self.converged = True

    def _quad_half(self, a, b, weight, c):
        beta = self.beta
        sing = _nearest_singularity(np.array([a + c, b + c]))
        pts = sorted({float(p - c) for p in sing if a < p - c < b})

        def f(u):
            return weight(u) * _log_weight(u + c, beta)

        val, err, *rest = integrate.quad(
            f, a, b, points=pts or None, limit=400, epsabs=1e-14, epsrel=1e-12, full_output=1
        )
        ier = rest[0] if len(rest) == 1 else 0
        if ier not in (0,) and err > 1e-9 * max(abs(val), 1e-12):
            self.converged = False
        return val

    def __call__(self, c) -> np.ndarray:
        c = np.atleast_1d(np.asarray(c, dtype=float))
        D = self.delta
        out = np.empty_like(c)
        dist = np.abs(c - _nearest_singularity(c))
        near = dist < 3.0 * D
        # Gauss-Legendre on both halves away from the singularities
        u = 0.5 * D * (_GL_X + 1.0)
        wl = 0.5 * D * _GL_W * (1.0 - u / D)
        far = ~near
        if np.any(far):
            cf = c[far][:, None]
            right = np.sum(_log_weight(cf + u, self.beta) * wl, axis=1)
            left = np.sum(_log_weight(cf - u, self.beta) * wl, axis=1)
            out[far] = left + right
        for idx in np.flatnonzero(near):
            ci = c[idx]
            out[idx] = self._quad_half(-D, 0.0, lambda v: 1.0 + v / D, ci) + self._quad_half(
                0.0, D, lambda v: 1.0 - v / D, ci
            )
        return out


@dataclass(frozen=True)
class GSBetaResult:
    value: float
    direction: float
    converged: bool
    mesh_max: float


def _golden_max(fn, a, b, iters=60):
    g = (math.sqrt(5.0) - 1.0) / 2.0
    x1, x2 = b - g * (b - a), a + g * (b - a)
    f1, f2 = fn(x1), fn(x2)
    best = max((f1, x1), (f2, x2))
    for _ in range(iters):
        if f1 >= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - g * (b - a)
            f1 = fn(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + g * (b - a)
            f2 = fn(x2)
        best = max(best, (f1, x1), (f2, x2))
        if b - a < 1e-12:
            break
    return best


def gs_beta_details(omega: AngularKernel, beta: float, refine: bool = True) -> GSBetaResult:
    """Evaluate ``sup_zeta int |Omega(t)| log^beta(1 / |t . zeta|) dt``.

    ``|Omega|`` is the linear interpolant of ``|samples|``.  The integral at
    every sample direction is one circular correlation of ``|samples|`` with
    hat-function integrals of the log weight; those integrals use adaptive
    quadrature with breakpoints at the two zeros of ``t . zeta``.  The best
    mesh direction is then refined by golden-section search.
    """
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta!r}")
    w = np.abs(omega.samples)
    M = omega.M
    if not np.any(w):
        return GSBetaResult(0.0, 0.0, True, 0.0)
    delta = 2.0 * np.pi / M
    hats = _HatIntegrals(delta, beta)
    G = hats(delta * np.arange(M))
    # F[m] = sum_i w[i] G[i - m]
    F = np.fft.ifft(np.fft.fft(w) * np.conj(np.fft.fft(G))).real
    m_best = int(np.argmax(F))
    mesh_max = float(F[m_best])
    value, direction = mesh_max, m_best * delta
    if refine:
        t = omega.angles

        def at(phi):
            return float(np.sum(w * hats(t - phi)))

        val, phi = _golden_max(at, direction - delta, direction + delta)
        if val > value:
            value, direction = val, phi
    if not hats.converged:
        logger.warning("log-weight quadrature did not converge; reporting +inf")
        return GSBetaResult(math.inf, direction, False, mesh_max)
    return GSBetaResult(value, float(np.mod(direction, np.pi)), True, mesh_max)


def gs_beta_functional(omega: AngularKernel, beta: float, refine: bool = True) -> float:
    """Value of the log-integrability functional (``+inf`` if quadrature diverged)."""
    return gs_beta_details(omega, beta, refine).value


# ---------------------------------------------------------------------------
# dyadic pieces
# ---------------------------------------------------------------------------


def resolvable_j_range(grid: BoxGrid) -> tuple[int, int]:
    """Dyadic indices whose pieces fit the box and are resolved by >= 2 cells.

    ``2^j >= 4h`` (the sharp annulus ``[2^(j-1), 2^j)`` spans two cells) and
    ``2^(j+1) <= L``.
    """
    j_min = math.ceil(math.log2(4.0 * grid.spacing))
    j_max = math.floor(math.log2(grid.half_width / 2.0))
    return j_min, j_max


def dyadic_kernel_values(omega: AngularKernel, j: int, flavor: str, x1, x2, k: int | None = None):
    """``Omega(x/|x|) |x|^(-d-k) * cutoff_j(|x|)`` at arbitrary points.

    ``flavor='sharp'`` uses the indicator of ``2^(j-1) <= |x| < 2^j``;
    ``flavor='smooth'`` uses ``varphi(2^-j |x|)``.
    """
    k = omega.moment_order if k is None else int(k)
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    r = np.hypot(x1, x2)
    if flavor == "sharp":
        cut = ((r >= 2.0 ** (j - 1)) & (r < 2.0**j)).astype(float)
    elif flavor == "smooth":
        cut = varphi_profile(r * 2.0 ** (-j))
    else:
        raise ValueError(f"flavor must be 'sharp' or 'smooth', got {flavor!r}")
    out = np.zeros_like(r)
    m = cut != 0
    out[m] = omega(np.arctan2(x2[m], x1[m])) * r[m] ** (-2.0 - k) * cut[m]
    return out


@dataclass(frozen=True, eq=False)
class DyadicKernel:
    j: int
    k: int
    flavor: str
    values: GridFunction

    def l1_norm(self) -> float:
        return self.values.norm(1)

    @property
    def support(self) -> tuple[float, float]:
        if self.flavor == "sharp":
            return 2.0 ** (self.j - 1), 2.0**self.j
        return 2.0 ** (self.j - 1), 2.0 ** (self.j + 1)


def check_resolvable(grid: BoxGrid, j: int):
    lo, hi = resolvable_j_range(grid)
    if not lo <= j <= hi:
        raise ValueError(f"dyadic index j={j} is not resolvable on {grid}; admissible range is [{lo}, {hi}]")


def make_dyadic_kernel(
    omega: AngularKernel,
    j: int,
    flavor: str,
    grid: BoxGrid,
    k: int | None = None,
    sampling: str = "point",
    subcells: int = 8,
) -> DyadicKernel:
    """Sample the dyadic piece ``K_j`` on the grid (offset convention: origin at ``n // 2``).

    ``sampling='point'`` evaluates the kernel at lattice points, which is what
    the direct-summation oracle uses.  ``sampling='cell'`` stores cell averages
    (midpoint rule on ``subcells^2`` sub-cells), so lattice sums approximate
    integrals over the annulus even when it is only a few cells wide.
    """
    check_resolvable(grid, j)
    k = omega.moment_order if k is None else int(k)
    x1, x2 = grid.coords()
    if sampling == "point":
        vals = dyadic_kernel_values(omega, j, flavor, x1, x2, k)
    elif sampling == "cell":
        h = grid.spacing
        offs = (np.arange(subcells) + 0.5) / subcells - 0.5
        vals = np.zeros(grid.shape)
        for o1 in offs:
            for o2 in offs:
                vals += dyadic_kernel_values(omega, j, flavor, x1 + o1 * h, x2 + o2 * h, k)
        vals /= subcells**2
    else:
        raise ValueError(f"sampling must be 'point' or 'cell', got {sampling!r}")
    return DyadicKernel(int(j), k, flavor, GridFunction(grid, vals))
