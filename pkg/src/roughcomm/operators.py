"""Composable linear operators on box grids.

Every operator is an immutable :class:`OperatorHandle` with ``apply`` and
``adjoint``.  The adjoint is taken for the inner product
``<f, g> = sum f conj(g) h^2``.  Commutators use the binomial form

    [a, U]^k f = sum_i C(k, i) a^i U((-a)^(k-i) f),

with ``a`` shifted by its midrange first (commutators ignore constants, and
the shift keeps the cancellation in the sum small).
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .grid import (
    BoxGrid,
    GridFunction,
    SpectralFunction,
    apply_multiplier,
    convolve,
    correlate,
    kernel_spectrum,
    lp_norm,
    inner,
    transfer_function,
)
from .kernels import (
    AngularKernel,
    check_resolvable,
    dyadic_kernel_values,
    make_dyadic_kernel,
    resolvable_j_range,
)
from .windows import WindowFamily, bump

logger = logging.getLogger(__name__)

__all__ = [
    "LipschitzSymbol",
    "lipschitz_bound",
    "constant_symbol",
    "linear_symbol",
    "bump_symbol",
    "tent_symbol",
    "load_symbol_file",
    "OperatorHandle",
    "ConvolutionOp",
    "MultiplierOp",
    "PointwiseOp",
    "CommutatorOp",
    "SumOp",
    "CompositionOp",
    "IdentityOp",
    "DenseKernelOp",
    "EmptyBandWarning",
    "apply_Q_s",
    "q_s_operator",
    "q_s_symbol",
    "apply_W_Omega_j",
    "w_omega_j_operator",
    "s_l_symbol",
    "s_l_levels",
    "apply_S_l",
    "direct_operator",
    "apply_T_direct",
    "dyadic_kernel_sum",
    "dyadic_operator",
    "apply_T_dyadic",
    "t_omega_m_kernel",
    "build_H_l",
    "R_operator",
    "mu_transfer",
    "mu_kernel",
    "apply_commutator_pow",
    "NormEstimate",
    "estimate_l2_opnorm",
    "estimate_lp_opnorm",
    "random_bumps",
    "modulated_bumps",
    "band_limited",
    "gaussian",
]


# ---------------------------------------------------------------------------
# Lipschitz symbols
# ---------------------------------------------------------------------------


def lipschitz_bound(values: GridFunction) -> float:
    """``max |grad a|`` from forward differences (cells with both neighbours)."""
    v = values.values
    h = values.grid.spacing
    d1 = (v[1:, :-1] - v[:-1, :-1]) / h
    d2 = (v[:-1, 1:] - v[:-1, :-1]) / h
    return float(np.max(np.sqrt(np.abs(d1) ** 2 + np.abs(d2) ** 2)))


@dataclass(frozen=True, eq=False)
class LipschitzSymbol:
    values: GridFunction
    lip_bound: float | None = None
    label: str = ""

    def __post_init__(self):
        lb = lipschitz_bound(self.values)
        if not math.isfinite(lb):
            raise ValueError("Lipschitz bound of the symbol is not finite")
        if self.lip_bound is not None and abs(self.lip_bound - lb) > 1e-12 * max(1.0, lb):
            raise ValueError(f"stored lip_bound {self.lip_bound!r} disagrees with recomputed {lb!r}")
        object.__setattr__(self, "lip_bound", lb)

    @property
    def grid(self) -> BoxGrid:
        return self.values.grid

    def centered(self) -> np.ndarray:
        """Values shifted by their midrange; exactly zero for a constant symbol."""
        v = self.values.values
        if np.iscomplexobj(v):
            mid = 0.5 * (v.real.max() + v.real.min()) + 0.5j * (v.imag.max() + v.imag.min())
        else:
            mid = 0.5 * (v.max() + v.min())
        return v - mid

    @property
    def is_constant(self) -> bool:
        v = self.values.values
        return bool(np.all(v == v.flat[0]))

    def conj(self) -> "LipschitzSymbol":
        return LipschitzSymbol(self.values.conj(), None, self.label)

    def scaled(self, lam: float) -> "LipschitzSymbol":
        return LipschitzSymbol(self.values * lam, None, self.label)

    def shifted(self, c: float) -> "LipschitzSymbol":
        return LipschitzSymbol(self.values + c, None, self.label)


def constant_symbol(grid: BoxGrid, c: float = 1.0) -> LipschitzSymbol:
    return LipschitzSymbol(GridFunction(grid, np.full(grid.shape, float(c))), label=f"constant({c:g})")


def linear_symbol(grid: BoxGrid, direction=(1.0, 0.0), offset: float = 0.0) -> LipschitzSymbol:
    """``a(x) = x . e + offset``."""
    x1, x2 = grid.coords()
    e1, e2 = (float(d) for d in direction)
    return LipschitzSymbol(GridFunction(grid, e1 * x1 + e2 * x2 + offset), label=f"linear({e1:g},{e2:g})")


def bump_symbol(grid: BoxGrid, center=(0.0, 0.0), radius: float = 0.5, amplitude: float = 1.0) -> LipschitzSymbol:
    """Smooth compactly supported ``amplitude * bump(|x - center| / radius)``."""
    x1, x2 = grid.coords()
    r = np.hypot(x1 - center[0], x2 - center[1]) / radius
    return LipschitzSymbol(GridFunction(grid, amplitude * bump(r)), label=f"bump({radius:g})")


def tent_symbol(grid: BoxGrid, center=(0.0, 0.0), radius: float = 0.5, amplitude: float = 1.0) -> LipschitzSymbol:
    """Piecewise-linear cone ``amplitude * max(0, 1 - |x - center| / radius)`` (Lipschitz, not C^1)."""
    x1, x2 = grid.coords()
    r = np.hypot(x1 - center[0], x2 - center[1]) / radius
    return LipschitzSymbol(GridFunction(grid, amplitude * np.maximum(0.0, 1.0 - r)), label=f"tent({radius:g})")


def load_symbol_file(path, grid: BoxGrid) -> LipschitzSymbol:
    """Read ``n`` rows of ``n`` whitespace-separated reals (row index = first axis)."""
    path = Path(path)
    vals = np.loadtxt(path, dtype=float, ndmin=2)
    if vals.shape != grid.shape:
        raise ValueError(f"{path}: expected a {grid.shape} array of samples, got {vals.shape}")
    if not np.all(np.isfinite(vals)):
        raise ValueError(f"{path}: symbol samples must be finite")
    return LipschitzSymbol(GridFunction(grid, vals), label=f"file({path.name})")


# ---------------------------------------------------------------------------
# operator handles
# ---------------------------------------------------------------------------


class OperatorHandle:
    """Linear operator on the functions of one grid."""

    kind = "abstract"

    def __init__(self, grid: BoxGrid):
        self.grid = grid

    def apply(self, f: GridFunction) -> GridFunction:
        if f.grid != self.grid:
            raise ValueError(f"grid mismatch: operator on {self.grid}, input on {f.grid}")
        return self._apply(f)

    def _apply(self, f: GridFunction) -> GridFunction:  # pragma: no cover - abstract
        raise NotImplementedError

    def adjoint(self) -> "OperatorHandle":  # pragma: no cover - abstract
        raise NotImplementedError

    def __call__(self, f: GridFunction) -> GridFunction:
        return self.apply(f)

    def __add__(self, other: "OperatorHandle") -> "OperatorHandle":
        return SumOp((self, other), (1.0, 1.0))

    def __sub__(self, other: "OperatorHandle") -> "OperatorHandle":
        return SumOp((self, other), (1.0, -1.0))

    def __rmul__(self, c) -> "OperatorHandle":
        return SumOp((self,), (c,))

    def __matmul__(self, other: "OperatorHandle") -> "OperatorHandle":
        return CompositionOp((self, other))

    def __repr__(self):
        return f"{type(self).__name__}(kind={self.kind!r})"


class IdentityOp(OperatorHandle):
    kind = "identity"

    def __init__(self, grid: BoxGrid, scale: complex = 1.0):
        super().__init__(grid)
        self.scale = scale

    def _apply(self, f):
        return f if self.scale == 1 else f * self.scale

    def adjoint(self):
        return IdentityOp(self.grid, np.conj(self.scale))


class ConvolutionOp(OperatorHandle):
    """``f -> ker * f``; ``transposed=True`` gives the adjoint (correlation)."""

    kind = "convolution"

    def __init__(self, kernel: GridFunction, transposed: bool = False, label: str = "", _spectrum=None):
        super().__init__(kernel.grid)
        self.kernel = kernel
        self.transposed = transposed
        self.label = label
        self._spectrum = kernel_spectrum(kernel) if _spectrum is None else _spectrum

    def _apply(self, f):
        if self.transposed:
            return correlate(f, self.kernel, self._spectrum)
        return convolve(f, self.kernel, self._spectrum)

    def adjoint(self):
        return ConvolutionOp(self.kernel, not self.transposed, self.label, self._spectrum)

    def symbol(self) -> np.ndarray:
        """Transfer function on the padded dual lattice."""
        t = transfer_function(self.kernel)
        return np.conj(t) if self.transposed else t


class MultiplierOp(OperatorHandle):
    kind = "multiplier"

    def __init__(self, symbol: SpectralFunction, label: str = ""):
        super().__init__(symbol.grid)
        self.symbol = symbol
        self.label = label

    def _apply(self, f):
        return apply_multiplier(f, self.symbol)

    def adjoint(self):
        s = self.symbol
        if s.coeffs.dtype.kind == "f":
            return self
        return MultiplierOp(SpectralFunction(s.grid, np.conj(s.coeffs), s.padded), self.label)


class PointwiseOp(OperatorHandle):
    kind = "pointwise"

    def __init__(self, a: GridFunction):
        super().__init__(a.grid)
        self.a = a

    def _apply(self, f):
        return f * self.a

    def adjoint(self):
        return PointwiseOp(self.a.conj())


class CommutatorOp(OperatorHandle):
    """``sign * [a, base]^k`` via the binomial expansion."""

    kind = "commutator"

    def __init__(self, base: OperatorHandle, a: LipschitzSymbol, k: int, sign: float = 1.0):
        if a.grid != base.grid:
            raise ValueError("symbol and operator live on different grids")
        if int(k) < 0:
            raise ValueError("commutator order must be >= 0")
        super().__init__(base.grid)
        self.base = base
        self.a = a
        self.k = int(k)
        self.sign = sign

    def _apply(self, f):
        k = self.k
        if k == 0:
            return self.base.apply(f) * self.sign if self.sign != 1 else self.base.apply(f)
        a = self.a.centered()
        if not np.any(a):
            return GridFunction(self.grid, np.zeros(self.grid.shape, dtype=np.result_type(f.values, a)))
        vals = f.values
        total = None
        for i in range(k + 1):
            g = self.base.apply(GridFunction(self.grid, (-a) ** (k - i) * vals)).values
            term = math.comb(k, i) * a**i * g
            total = term if total is None else total + term
        return GridFunction(self.grid, self.sign * total)

    def adjoint(self):
        # ([a,U]^k)^* = (-1)^k [conj(a), U^*]^k
        return CommutatorOp(self.base.adjoint(), self.a.conj(), self.k, np.conj(self.sign) * (-1) ** self.k)


class SumOp(OperatorHandle):
    kind = "sum"

    def __init__(self, terms, coeffs=None):
        terms = tuple(terms)
        if not terms:
            raise ValueError("a sum needs at least one term")
        super().__init__(terms[0].grid)
        if any(t.grid != self.grid for t in terms):
            raise ValueError("grid mismatch among summands")
        self.terms = terms
        self.coeffs = tuple(coeffs) if coeffs is not None else (1.0,) * len(terms)

    def _apply(self, f):
        total = None
        for c, t in zip(self.coeffs, self.terms):
            v = t.apply(f).values
            v = v if c == 1 else c * v
            total = v if total is None else total + v
        return GridFunction(self.grid, total)

    def adjoint(self):
        return SumOp(tuple(t.adjoint() for t in self.terms), tuple(np.conj(c) for c in self.coeffs))


class CompositionOp(OperatorHandle):
    """``ops[0] @ ops[1] @ ...``: the last operator is applied first."""

    kind = "composition"

    def __init__(self, ops):
        ops = tuple(ops)
        if not ops:
            raise ValueError("a composition needs at least one operator")
        super().__init__(ops[0].grid)
        if any(o.grid != self.grid for o in ops):
            raise ValueError("grid mismatch among factors")
        self.ops = ops

    def _apply(self, f):
        for op in reversed(self.ops):
            f = op.apply(f)
        return f

    def adjoint(self):
        return CompositionOp(tuple(o.adjoint() for o in reversed(self.ops)))


class DenseKernelOp(OperatorHandle):
    """Dense double sum ``x -> sum_y K(x - y) (a(x) - a(y))^k f(y) h^2``.

    ``offset_kernel`` holds ``K`` on all offsets ``(-(n-1)..n-1) * h`` per
    axis.  Cost is ``O(n^4)``; this is the reference every FFT path is
    compared against.  ``a = None`` drops the symbol factor.
    """

    kind = "direct_pv"
    max_n = 96

    def __init__(self, grid: BoxGrid, offset_kernel: np.ndarray, a: LipschitzSymbol | None, k: int, label: str = ""):
        if grid.n > self.max_n:
            raise ValueError(
                f"dense summation needs n <= {self.max_n} (O(n^4) cost), got n = {grid.n}; use the dyadic FFT path"
            )
        super().__init__(grid)
        n = grid.n
        if offset_kernel.shape != (2 * n - 1, 2 * n - 1):
            raise ValueError("offset kernel must cover offsets -(n-1)..(n-1) on each axis")
        self.offset_kernel = offset_kernel
        self.a = a
        self.k = int(k)
        self.label = label

    def _apply(self, f):
        n = self.grid.n
        flip = self.offset_kernel[::-1, ::-1]
        win = sliding_window_view(flip, (n, n))
        a = None if self.a is None else self.a.values.values
        fv = f.values
        dtype = np.result_type(fv, self.offset_kernel, a if a is not None else 0.0)
        out = np.zeros(self.grid.shape, dtype=dtype)
        for i1 in range(n):
            # K(x - y) for x in row i1, all i2, all y
            block = win[n - 1 - i1, ::-1]
            if a is None:
                prod = block * fv
            else:
                prod = block * (a[i1][:, None, None] - a[None, :, :]) ** self.k * fv
            out[i1] = np.sum(prod.reshape(n, -1), axis=1)
        return GridFunction(self.grid, out * self.grid.cell_volume)

    def adjoint(self):
        # T^* g(y) = sum_x conj(K(x - y)) (conj a(x) - conj a(y))^k g(x) h^2
        sign = (-1) ** self.k if self.a is not None else 1
        K = sign * np.conj(self.offset_kernel[::-1, ::-1])
        a = None if self.a is None else self.a.conj()
        return DenseKernelOp(self.grid, K, a, self.k, self.label)


def _offset_coords(grid: BoxGrid):
    n, h = grid.n, grid.spacing
    d = h * np.arange(-(n - 1), n)
    return np.meshgrid(d, d, indexing="ij")


def grid_kernel_to_offsets(kernel: GridFunction) -> np.ndarray:
    """Embed a box-indexed kernel (origin at ``n // 2``) into the full offset array."""
    grid = kernel.grid
    n, c = grid.n, grid.origin_index
    out = np.zeros((2 * n - 1, 2 * n - 1), dtype=kernel.values.dtype)
    s = n - 1 - c
    out[s : s + n, s : s + n] = kernel.values
    return out


def dense_operator(kernel: GridFunction, a: LipschitzSymbol | None = None, k: int = 0) -> DenseKernelOp:
    """Dense-sum version of ``[a, conv(kernel)]^k`` (or plain convolution if ``a`` is None)."""
    return DenseKernelOp(kernel.grid, grid_kernel_to_offsets(kernel), a, k if a is not None else 0)


# ---------------------------------------------------------------------------
# Littlewood-Paley pieces
# ---------------------------------------------------------------------------


class EmptyBandWarning(UserWarning):
    """Raised (as a warning) when a dyadic frequency band misses the lattice."""


def _check_s(grid: BoxGrid, s: float):
    h, L = grid.spacing, grid.half_width
    if not (2.0 * h <= s <= L / 4.0):
        raise ValueError(f"scale s={s!r} outside the resolvable range [2h, L/4] = [{2 * h:g}, {L / 4:g}]")


def q_s_operator(grid: BoxGrid, s: float, w: WindowFamily) -> ConvolutionOp:
    _check_s(grid, s)
    return ConvolutionOp(w.psi_s(grid, s), label=f"Q_{s:g}")


def apply_Q_s(f: GridFunction, s: float, w: WindowFamily) -> GridFunction:
    """``Q_s f = psi_s * f`` with ``psi_s(x) = s^-2 psi(x / s)``."""
    return q_s_operator(f.grid, s, w).apply(f)


def q_s_symbol(grid: BoxGrid, s: float, w: WindowFamily, padded: bool = True) -> SpectralFunction:
    """Continuum multiplier ``psi_hat(s |xi|)`` of ``Q_s``."""
    return SpectralFunction(grid, w.psi_hat(s * grid.dual_radius(padded)), padded)


def w_omega_j_operator(grid: BoxGrid, j: int, omega: AngularKernel) -> ConvolutionOp:
    K = make_dyadic_kernel(omega, j, "smooth", grid, k=1)
    return ConvolutionOp(K.values, label=f"W_{j}")


def apply_W_Omega_j(f: GridFunction, j: int, omega: AngularKernel, w: WindowFamily | None = None) -> GridFunction:
    """Convolution with ``Omega(x/|x|) |x|^-3 varphi_j(|x|)``."""
    return w_omega_j_operator(f.grid, j, omega).apply(f)


def s_l_symbol(grid: BoxGrid, l: int, w: WindowFamily) -> SpectralFunction:
    """``varpi(2^-l |xi|)`` on the periodic dual lattice."""
    return SpectralFunction(grid, w.varpi(2.0 ** (-l) * grid.dual_radius(False)), padded=False)


def s_l_levels(grid: BoxGrid) -> list[int]:
    """All ``l`` whose band ``2^(l-2) < |xi| < 2^(l+2)`` meets the periodic lattice."""
    rho = grid.dual_radius(False)
    rmin = grid.dual_spacing(False)
    rmax = float(rho.max())
    lo = math.floor(math.log2(rmin)) - 2
    hi = math.ceil(math.log2(rmax)) + 2
    return [l for l in range(lo, hi + 1) if np.any((rho > 2.0 ** (l - 2)) & (rho < 2.0 ** (l + 2)))]


def apply_S_l(f: GridFunction, l: int, w: WindowFamily) -> GridFunction:
    """Multiplier ``varpi(2^-l xi)``; an empty band gives zero and an :class:`EmptyBandWarning`."""
    m = s_l_symbol(f.grid, l, w)
    if not np.any(m.coeffs):
        warnings.warn(f"band 2^{l} does not meet the dual lattice; S_{l} f = 0", EmptyBandWarning, stacklevel=2)
        return GridFunction(f.grid, np.zeros(f.grid.shape, dtype=f.values.dtype))
    return apply_multiplier(f, m)


# ---------------------------------------------------------------------------
# the commutator T_{Omega,a;k}
# ---------------------------------------------------------------------------


def _default_j_range(grid: BoxGrid, j_min, j_max):
    lo, hi = resolvable_j_range(grid)
    return (lo if j_min is None else int(j_min)), (hi if j_max is None else int(j_max))


def _truncated_offsets(omega: AngularKernel, grid: BoxGrid, k: int, r_in: float, r_out: float | None):
    d1, d2 = _offset_coords(grid)
    r = np.hypot(d1, d2)
    keep = r >= r_in
    if r_out is not None:
        keep &= r < r_out
    K = np.zeros_like(r)
    K[keep] = omega(np.arctan2(d2[keep], d1[keep])) * r[keep] ** (-2.0 - k)
    return K


def direct_operator(
    omega: AngularKernel, a: LipschitzSymbol, k: int, grid: BoxGrid, j_min: int | None = None, j_max: int | None = None
) -> DenseKernelOp:
    """Lattice-truncated ``T_{Omega,a;k}``: offsets with ``2^(j_min-1) <= |x-y|`` (and ``< 2^j_max`` if given)."""
    if j_min is None:
        j_min = resolvable_j_range(grid)[0]
    r_in = 2.0 ** (j_min - 1)
    if r_in < 2.0 * grid.spacing * (1 - 1e-12):
        raise ValueError(f"truncation radius 2^{j_min - 1} is below 2h = {2 * grid.spacing:g}")
    r_out = None if j_max is None else 2.0**j_max
    K = _truncated_offsets(omega, grid, k, r_in, r_out)
    return DenseKernelOp(grid, K, a, k, label="T_direct")


def _check_inner_support(f: GridFunction):
    outside = ~f.grid.inner_mask(0.5)
    if np.any(f.values[outside] != 0):
        raise ValueError("input must be supported in the inner half-box")


def apply_T_direct(
    omega: AngularKernel,
    a: LipschitzSymbol,
    k: int,
    f: GridFunction,
    j_min: int | None = None,
    j_max: int | None = None,
) -> GridFunction:
    """Dense O(n^4) evaluation of the truncated commutator; the reference for the FFT paths."""
    _check_inner_support(f)
    return direct_operator(omega, a, k, f.grid, j_min, j_max).apply(f)


def dyadic_kernel_sum(omega: AngularKernel, k: int, grid: BoxGrid, j_range) -> GridFunction:
    """``sum_j K_j`` over ``j_range`` (sharp flavor, point samples)."""
    js = list(j_range)
    total = np.zeros(grid.shape)
    for j in js:
        total = total + make_dyadic_kernel(omega, j, "sharp", grid, k).values.values
    return GridFunction(grid, total)


def dyadic_operator(omega: AngularKernel, a: LipschitzSymbol, k: int, grid: BoxGrid, j_range) -> CommutatorOp:
    js = list(j_range)
    for j in js:
        check_resolvable(grid, j)
    return CommutatorOp(ConvolutionOp(dyadic_kernel_sum(omega, k, grid, js), label="sum K_j"), a, k)


def apply_T_dyadic(omega: AngularKernel, a: LipschitzSymbol, k: int, f: GridFunction, j_range=None) -> GridFunction:
    """``sum_j sum_i C(k,i) a^i (K_j * ((-a)^(k-i) f))`` by FFT convolution."""
    if j_range is None:
        lo, hi = resolvable_j_range(f.grid)
        j_range = range(lo, hi + 1)
    js = list(j_range)
    if not js:
        warnings.warn("empty dyadic range; T f = 0", EmptyBandWarning, stacklevel=2)
        return GridFunction(f.grid, np.zeros(f.grid.shape, dtype=f.values.dtype))
    return dyadic_operator(omega, a, k, f.grid, js).apply(f)


def t_omega_m_kernel(omega: AngularKernel, m: int, grid: BoxGrid, j_min=None, j_max=None) -> GridFunction:
    """Kernel ``Omega(x/|x|) x_m / |x|^3`` truncated to ``2^(j_min-1) <= |x| < 2^j_max``."""
    lo, hi = _default_j_range(grid, j_min, None)
    x = grid.coords()
    r = np.hypot(*x)
    keep = r >= 2.0 ** (lo - 1)
    if j_max is not None:
        keep &= r < 2.0**j_max
    vals = np.zeros(grid.shape)
    vals[keep] = omega(np.arctan2(x[1][keep], x[0][keep])) * x[m - 1][keep] * r[keep] ** -3.0
    return GridFunction(grid, vals)


# ---------------------------------------------------------------------------
# mollified kernels H_l, R_l and the defects mu_{j,l}
# ---------------------------------------------------------------------------


def _full_j_range(grid, j_range):
    if j_range is None:
        lo, hi = resolvable_j_range(grid)
        return list(range(lo, hi + 1))
    return list(j_range)


def mollified_piece(omega: AngularKernel, j: int, l: int, k: int, grid: BoxGrid, w: WindowFamily) -> GridFunction:
    """``K_j * omega_{j-l}`` with the mollifier applied as the multiplier ``omega_hat(2^(j-l) |xi|)``.

    The spectral form keeps mollifier scales below the grid spacing meaningful:
    on the resolved band it is the exact action of the continuum convolution.
    """
    K = make_dyadic_kernel(omega, j, "sharp", grid, k).values
    m = SpectralFunction(grid, w.omega_hat(2.0 ** (j - l) * grid.dual_radius(True)), True)
    return apply_multiplier(K, m)


def build_H_l(
    omega: AngularKernel, l: int, k: int, j_range=None, w: WindowFamily | None = None, grid: BoxGrid | None = None
) -> GridFunction:
    """``H_l = sum_j K_j * omega_{j-l}`` on the grid."""
    if int(l) < 1:
        raise ValueError(f"l must be a positive integer, got {l!r}")
    if grid is None:
        raise ValueError("a grid is required")
    w = w if w is not None else _default_windows(k)
    js = _full_j_range(grid, j_range)
    total = np.zeros(grid.shape)
    for j in js:
        check_resolvable(grid, j)
        total = total + mollified_piece(omega, j, l, k, grid, w).values
    return GridFunction(grid, total)


def R_operator(
    omega: AngularKernel, l: int, k: int, grid: BoxGrid, j_range=None, w: WindowFamily | None = None
) -> ConvolutionOp:
    """Convolution with ``H_l``."""
    return ConvolutionOp(build_H_l(omega, l, k, j_range, w, grid), label=f"R_{l}")


def mu_transfer(omega: AngularKernel, j: int, l: int, k: int, grid: BoxGrid, w: WindowFamily) -> np.ndarray:
    """``mu_hat_{j,l} = K_hat_j(xi) * (1 - omega_hat(2^(j-l) xi))`` on the padded dual lattice."""
    K = make_dyadic_kernel(omega, j, "sharp", grid, k).values
    return transfer_function(K) * w.omega_defect(2.0 ** (j - l) * grid.dual_radius(True))


def mu_kernel(omega: AngularKernel, j: int, l: int, k: int, grid: BoxGrid, w: WindowFamily) -> GridFunction:
    """``mu_{j,l} = K_j - K_j * omega_{j-l}`` in real space."""
    K = make_dyadic_kernel(omega, j, "sharp", grid, k).values
    m = SpectralFunction(grid, w.omega_defect(2.0 ** (j - l) * grid.dual_radius(True)), True)
    return apply_multiplier(K, m)


def _default_windows(k):
    from .windows import build_windows

    return build_windows(k)


def apply_commutator_pow(base: OperatorHandle, a: LipschitzSymbol, k: int, f: GridFunction) -> GridFunction:
    """``[a, U]^k f`` by the binomial identity (``k + 1`` applications of ``U``)."""
    if int(k) < 1:
        raise ValueError("k must be >= 1")
    return CommutatorOp(base, a, k).apply(f)


# ---------------------------------------------------------------------------
# operator norm estimates
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class NormEstimate:
    """Lower bound ``||op v|| / ||v||`` from power iteration."""

    value: float
    converged: bool
    iterations: int
    vector: GridFunction | None = field(default=None, repr=False)


def _random_start(grid: BoxGrid, rng: np.random.Generator, support: float | None = 0.5) -> GridFunction:
    v = rng.standard_normal(grid.shape)
    if support is not None:
        v = v * grid.inner_mask(support)
    return GridFunction(grid, v)


def estimate_l2_opnorm(
    op: OperatorHandle,
    tol: float = 1e-8,
    max_iter: int = 300,
    seed: int = 0,
    start: GridFunction | None = None,
    support: float | None = None,
) -> NormEstimate:
    """Power iteration on ``op^* op``; returns ``sqrt`` of the last Rayleigh quotient.

    The value is ``||op v|| / ||v||`` for the final iterate, hence a lower
    bound on the L2 operator norm.  ``support`` restricts the random start to
    an inner sub-box (the iterates may spread beyond it).
    """
    rng = np.random.default_rng(seed)
    v = start if start is not None else _random_start(op.grid, rng, support)
    nv = lp_norm(v, 2)
    if nv == 0:
        raise ValueError("zero start vector")
    v = v * (1.0 / nv)
    adj = op.adjoint()
    prev = None
    lam = 0.0
    for it in range(1, max_iter + 1):
        Av = op.apply(v)
        lam = lp_norm(Av, 2) ** 2
        if lam == 0:
            return NormEstimate(0.0, True, it, v)
        if prev is not None and abs(lam - prev) <= tol * lam:
            return NormEstimate(math.sqrt(lam), True, it, v)
        prev = lam
        w_ = adj.apply(Av)
        nw = lp_norm(w_, 2)
        if nw == 0:
            return NormEstimate(math.sqrt(lam), True, it, v)
        v = w_ * (1.0 / nw)
    logger.info("power iteration did not converge in %d steps", max_iter)
    return NormEstimate(math.sqrt(lam), False, max_iter, v)


def _duality_map(v: GridFunction, p: float) -> GridFunction:
    """``|v|^(p-1) sgn(v) / ||v||_p^(p-1)``: the unit norming functional in ``L^p'``."""
    a = np.abs(v.values)
    nv = lp_norm(v, p)
    if nv == 0:
        return v
    with np.errstate(invalid="ignore", divide="ignore"):
        sgn = np.where(a > 0, v.values / np.where(a > 0, a, 1.0), 0.0)
    vals = (a / nv) ** (p - 1.0) * sgn
    if not np.iscomplexobj(v.values):
        vals = vals.real
    return GridFunction(v.grid, vals)


def random_bumps(grid: BoxGrid, rng: np.random.Generator, count: int = 4) -> GridFunction:
    """Sum of ``count`` randomly placed, sized and signed bumps in the inner half-box."""
    x1, x2 = grid.coords()
    L = grid.half_width
    out = np.zeros(grid.shape)
    for _ in range(count):
        r = rng.uniform(min(4 * grid.spacing, 0.1 * L), 0.2 * L)
        c = rng.uniform(-0.5 * L + r, 0.5 * L - r, size=2)
        out += rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 1.0) * bump(np.hypot(x1 - c[0], x2 - c[1]) / r)
    return GridFunction(grid, out)


def modulated_bumps(grid: BoxGrid, rng: np.random.Generator) -> GridFunction:
    """A bump times a random plane wave below half the Nyquist frequency."""
    x1, x2 = grid.coords()
    L = grid.half_width
    r = rng.uniform(0.15 * L, 0.25 * L)
    c = rng.uniform(-0.5 * L + r, 0.5 * L - r, size=2)
    kmax = 0.5 * grid.nyquist()
    xi = rng.uniform(-kmax, kmax, size=2)
    phase = rng.uniform(0, 2 * np.pi)
    vals = bump(np.hypot(x1 - c[0], x2 - c[1]) / r) * np.cos(xi[0] * x1 + xi[1] * x2 + phase)
    return GridFunction(grid, vals)


def gaussian(grid: BoxGrid, sigma: float | None = None, center=(0.0, 0.0)) -> GridFunction:
    sigma = grid.half_width / 8 if sigma is None else sigma
    x1, x2 = grid.coords()
    return GridFunction(grid, np.exp(-((x1 - center[0]) ** 2 + (x2 - center[1]) ** 2) / (2 * sigma**2)))


def band_limited(
    grid: BoxGrid, rng: np.random.Generator, rho_lo: float, rho_hi: float, max_modes: int | None = None
) -> GridFunction:
    """Real trigonometric polynomial with frequencies on the periodic lattice in ``[rho_lo, rho_hi]``.

    Frequencies are the integer pairs ``q`` with ``|q| pi / L`` in the band;
    coefficients are drawn in a fixed order over ``q``, so the same seed gives
    the same continuum function on every resolution that resolves the band.
    """
    L = grid.half_width
    step = np.pi / L
    qmax = int(math.floor(rho_hi / step))
    if rho_hi >= grid.nyquist():
        raise ValueError("band exceeds the Nyquist frequency")
    qs = np.arange(-qmax, qmax + 1)
    q1, q2 = np.meshgrid(qs, qs, indexing="ij")
    rho = step * np.hypot(q1, q2)
    # half-plane representatives, fixed enumeration order
    half = (q1 > 0) | ((q1 == 0) & (q2 > 0))
    sel = (rho >= rho_lo) & (rho <= rho_hi) & half
    Q1, Q2 = q1[sel], q2[sel]
    amp = rng.standard_normal(Q1.size)
    ph = rng.uniform(0, 2 * np.pi, Q1.size)
    x1, x2 = grid.coords()
    out = np.zeros(grid.shape)
    for a_, p_, k1, k2 in zip(amp, ph, Q1, Q2):
        out += a_ * np.cos(step * (k1 * x1 + k2 * x2) + p_)
    return GridFunction(grid, out)


def estimate_lp_opnorm(
    op: OperatorHandle,
    p: float,
    trials: int = 6,
    seed: int = 0,
    iterations: int = 25,
    l2_iterate: GridFunction | None = None,
) -> float:
    """Heuristic lower bound ``max ||op f||_p / ||f||_p`` over a seeded family.

    Candidates are random bumps, modulated bumps and (if given) the L2 power
    iterate; each is improved by the nonlinear power method for p-norms
    (Boyd's iteration), whose ratio is nondecreasing.
    """
    if not (1 < p < math.inf):
        raise ValueError(f"p must lie in (1, inf), got {p!r}")
    rng = np.random.default_rng(seed)
    q = p / (p - 1.0)
    adj = op.adjoint()
    starts = []
    for t in range(trials):
        starts.append(random_bumps(op.grid, rng) if t % 2 == 0 else modulated_bumps(op.grid, rng))
    if l2_iterate is not None:
        starts.append(l2_iterate)
    best = 0.0
    for f in starts:
        nf = lp_norm(f, p)
        if nf == 0:
            continue
        f = f * (1.0 / nf)
        ratio = 0.0
        for _ in range(iterations):
            Af = op.apply(f)
            r = lp_norm(Af, p) / lp_norm(f, p)
            if r <= ratio * (1 + 1e-10):
                ratio = max(ratio, r)
                break
            ratio = r
            if r == 0:
                break
            z = adj.apply(_duality_map(Af, p))
            if lp_norm(z, q) == 0:
                break
            f = _duality_map(z, q)
        best = max(best, ratio)
    return float(best)
