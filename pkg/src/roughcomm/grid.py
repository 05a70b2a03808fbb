"""Uniform box grids, zero-padded FFT convolution, spectral multipliers and Lp norms.

Every operator in the package acts on samples of a function on the box
``[-L, L)^d`` with ``n`` points per axis.  Fourier transforms are unitary
approximations of the continuum transform

    f^(xi) = (2 pi)^(-d/2) * integral f(x) exp(-i x.xi) dx,

evaluated on either the padded dual lattice (used for linear, non-circular
convolution) or the periodic dual lattice of the unpadded box, whose spacing
is ``pi / L``.  Quadrature weights ``h^d`` are explicit, so discrete sums
approximate continuum integrals with no hidden constants.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

__all__ = [
    "BoxGrid",
    "GridFunction",
    "SpectralFunction",
    "fft_forward",
    "fft_inverse",
    "transfer_function",
    "convolve",
    "correlate",
    "kernel_spectrum",
    "apply_multiplier",
    "lp_norm",
    "inner",
]


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class BoxGrid:
    """Uniform lattice on ``[-half_width, half_width)^dim``.

    Point ``i`` on each axis sits at ``-half_width + i * spacing``; the origin is
    index ``n // 2``.  Only ``dim == 2`` is implemented.
    """

    n: int = 256
    half_width: float = 1.0
    pad_factor: int = 2
    dim: int = 2

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or not _is_power_of_two(int(self.n)):
            raise ValueError(f"n must be a power of two, got {self.n!r}")
        if self.n < 4:
            raise ValueError(f"n must be at least 4, got {self.n}")
        if not (self.half_width > 0 and np.isfinite(self.half_width)):
            raise ValueError(f"half_width must be positive, got {self.half_width!r}")
        if int(self.pad_factor) < 2:
            raise ValueError(f"pad_factor must be >= 2, got {self.pad_factor}")
        if self.dim != 2:
            raise NotImplementedError("only dim = 2 is implemented")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "pad_factor", int(self.pad_factor))
        object.__setattr__(self, "half_width", float(self.half_width))

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.n

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @property
    def padded_n(self) -> int:
        return self.pad_factor * self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def origin_index(self) -> int:
        return self.n // 2

    def axis(self) -> np.ndarray:
        return -self.half_width + self.spacing * np.arange(self.n)

    def coords(self) -> tuple[np.ndarray, ...]:
        ax = self.axis()
        return tuple(np.meshgrid(*([ax] * self.dim), indexing="ij"))

    def radius(self) -> np.ndarray:
        x1, x2 = self.coords()
        return np.hypot(x1, x2)

    def lattice_size(self, padded: bool = True) -> int:
        return self.padded_n if padded else self.n

    def frequencies(self, padded: bool = True) -> np.ndarray:
        """Angular frequencies of one axis of the dual lattice."""
        return 2.0 * np.pi * np.fft.fftfreq(self.lattice_size(padded), d=self.spacing)

    def dual_coords(self, padded: bool = True) -> tuple[np.ndarray, ...]:
        w = self.frequencies(padded)
        return tuple(np.meshgrid(*([w] * self.dim), indexing="ij"))

    def dual_radius(self, padded: bool = True) -> np.ndarray:
        k1, k2 = self.dual_coords(padded)
        return np.hypot(k1, k2)

    def dual_spacing(self, padded: bool = True) -> float:
        return 2.0 * np.pi / (self.lattice_size(padded) * self.spacing)

    def nyquist(self) -> float:
        return np.pi / self.spacing

    def inner_mask(self, fraction: float = 0.5) -> np.ndarray:
        """Cells with every coordinate in ``[-fraction*L, fraction*L)``."""
        lim = fraction * self.half_width
        masks = [(c >= -lim) & (c < lim) for c in self.coords()]
        return np.logical_and.reduce(masks)

    def refined(self, factor: int = 2) -> "BoxGrid":
        return BoxGrid(self.n * factor, self.half_width, self.pad_factor, self.dim)

    def zeros(self) -> "GridFunction":
        return GridFunction(self, np.zeros(self.shape))

    def ones(self) -> "GridFunction":
        return GridFunction(self, np.ones(self.shape))


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Samples of a function on every point of a :class:`BoxGrid`."""

    grid: BoxGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values)
        if vals.dtype.kind not in "fc":
            vals = vals.astype(float)
        if vals.shape != self.grid.shape:
            raise ValueError(f"values shape {vals.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("GridFunction values must be finite (found NaN or Inf)")
        object.__setattr__(self, "values", _frozen(vals))

    @classmethod
    def from_callable(cls, grid: BoxGrid, func) -> "GridFunction":
        return cls(grid, func(*grid.coords()))

    @property
    def is_real(self) -> bool:
        return self.values.dtype.kind == "f"

    def _check(self, other: "GridFunction"):
        if other.grid != self.grid:
            raise ValueError(f"grid mismatch: {self.grid} vs {other.grid}")

    def _binary(self, other, op):
        if isinstance(other, GridFunction):
            self._check(other)
            return GridFunction(self.grid, op(self.values, other.values))
        return GridFunction(self.grid, op(self.values, other))

    def __add__(self, other):
        return self._binary(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __rsub__(self, other):
        return GridFunction(self.grid, other - self.values)

    def __mul__(self, other):
        return self._binary(other, np.multiply)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._binary(other, np.divide)

    def __neg__(self):
        return GridFunction(self.grid, -self.values)

    def __pow__(self, p):
        return GridFunction(self.grid, self.values**p)

    def conj(self) -> "GridFunction":
        return self if self.is_real else GridFunction(self.grid, np.conj(self.values))

    @property
    def real(self) -> "GridFunction":
        return GridFunction(self.grid, self.values.real)

    def integral(self) -> complex | float:
        return np.sum(self.values) * self.grid.cell_volume

    def norm(self, p: float = 2.0) -> float:
        return lp_norm(self, p)


@dataclass(frozen=True, eq=False)
class SpectralFunction:
    """Values on the padded (``padded=True``) or periodic dual lattice of a grid."""

    grid: BoxGrid
    coeffs: np.ndarray = field(repr=False)
    padded: bool = True

    def __post_init__(self):
        c = np.asarray(self.coeffs)
        if c.dtype.kind not in "fc":
            c = c.astype(float)
        N = self.grid.lattice_size(self.padded)
        if c.shape != (N,) * self.grid.dim:
            raise ValueError(f"coeffs shape {c.shape} does not match dual lattice {(N, N)}")
        if not np.all(np.isfinite(c)):
            raise ValueError("SpectralFunction coefficients must be finite")
        object.__setattr__(self, "coeffs", _frozen(c))

    @classmethod
    def from_radial(cls, grid: BoxGrid, profile, padded: bool = True) -> "SpectralFunction":
        return cls(grid, profile(grid.dual_radius(padded)), padded)

    def norm(self) -> float:
        w = self.grid.dual_spacing(self.padded) ** self.grid.dim
        return float(np.sqrt(np.sum(np.abs(self.coeffs) ** 2) * w))

    def __mul__(self, other):
        if isinstance(other, SpectralFunction):
            if other.grid != self.grid or other.padded != self.padded:
                raise ValueError("dual lattice mismatch")
            return SpectralFunction(self.grid, self.coeffs * other.coeffs, self.padded)
        return SpectralFunction(self.grid, self.coeffs * other, self.padded)

    __rmul__ = __mul__


def _phase(grid: BoxGrid, padded: bool) -> np.ndarray:
    # shifts the DFT origin from the first sample (x = -L) to x = 0
    w = grid.frequencies(padded)
    p = np.exp(1j * grid.half_width * w)
    return np.multiply.outer(p, p)


def _scale(grid: BoxGrid) -> float:
    return (grid.spacing / np.sqrt(2.0 * np.pi)) ** grid.dim


def _embed(grid: BoxGrid, values: np.ndarray, padded: bool) -> np.ndarray:
    if not padded:
        return values
    N = grid.padded_n
    out = np.zeros((N, N), dtype=values.dtype)
    out[: grid.n, : grid.n] = values
    return out


def fft_forward(f: GridFunction, padded: bool = True) -> SpectralFunction:
    """Unitary Fourier transform of ``f`` sampled on the dual lattice.

    With ``padded=True`` the samples are zero-extended to ``pad_factor * n``
    points per axis first (finer frequency spacing, no periodization).
    """
    grid = f.grid
    F = np.fft.fft2(_embed(grid, f.values, padded))
    return SpectralFunction(grid, _scale(grid) * _phase(grid, padded) * F, padded)


def fft_inverse(F: SpectralFunction) -> GridFunction:
    """Inverse of :func:`fft_forward`, restricted to the unpadded box.

    The result is complex; callers that know it is real take ``.real``.
    """
    grid = F.grid
    vals = np.fft.ifft2(F.coeffs / (_scale(grid) * _phase(grid, F.padded)))
    return GridFunction(grid, vals[: grid.n, : grid.n])


def transfer_function(ker: GridFunction, padded: bool = True) -> np.ndarray:
    """Non-unitary transform ``sum_x ker(x) exp(-i x.xi) h^d``.

    This is the symbol of convolution with ``ker``; its sup bounds the
    operator's L2 norm.
    """
    return (2.0 * np.pi) ** (ker.grid.dim / 2) * fft_forward(ker, padded).coeffs


def boundary_mass_fraction(ker: GridFunction) -> float:
    """Share of ``sum |ker|`` sitting on the outermost ring of cells."""
    a = np.abs(ker.values)
    total = np.sum(a)
    if total == 0:
        return 0.0
    ring = np.sum(a) - np.sum(a[1:-1, 1:-1])
    return float(ring / total)


def _real_if(vals: np.ndarray, real: bool) -> np.ndarray:
    return vals.real if real else vals


def kernel_spectrum(ker: GridFunction) -> np.ndarray:
    """Raw padded DFT of a kernel, reusable across many convolutions."""
    return np.fft.fft2(_embed(ker.grid, ker.values, True))


def convolve(f: GridFunction, ker: GridFunction, spectrum: np.ndarray | None = None) -> GridFunction:
    """Linear convolution ``x -> sum_y ker(x - y) f(y) h^d`` on the box.

    ``ker`` is read as a function of the offset ``x - y`` (its origin is the
    grid's origin index).  Zero-padding to ``pad_factor * n`` removes any
    wrap-around, and the output is restricted to the box.  ``spectrum`` may
    carry a precomputed :func:`kernel_spectrum`.
    """
    if f.grid != ker.grid:
        raise ValueError(f"grid mismatch: {f.grid} vs {ker.grid}")
    grid = f.grid
    n, c = grid.n, grid.origin_index
    A = np.fft.fft2(_embed(grid, f.values, True))
    B = kernel_spectrum(ker) if spectrum is None else spectrum
    full = np.fft.ifft2(A * B)[c : c + n, c : c + n] * grid.cell_volume
    return GridFunction(grid, _real_if(full, f.is_real and ker.is_real))


def correlate(g: GridFunction, ker: GridFunction, spectrum: np.ndarray | None = None) -> GridFunction:
    """Adjoint of ``f -> convolve(f, ker)``: ``y -> sum_x conj(ker(x - y)) g(x) h^d``."""
    if g.grid != ker.grid:
        raise ValueError(f"grid mismatch: {g.grid} vs {ker.grid}")
    grid = g.grid
    n, N, c = grid.n, grid.padded_n, grid.origin_index
    A = np.fft.fft2(_embed(grid, g.values, True))
    B = kernel_spectrum(ker) if spectrum is None else spectrum
    full = np.fft.ifft2(A * np.conj(B)) * grid.cell_volume
    # index q = y - c (mod N)
    idx = (np.arange(n) - c) % N
    out = full[np.ix_(idx, idx)]
    return GridFunction(grid, _real_if(out, g.is_real and ker.is_real))


def apply_multiplier(f: GridFunction, m: SpectralFunction) -> GridFunction:
    """Inverse transform of ``m * f^``.

    On the periodic lattice (``m.padded is False``) this is an exact circular
    multiplier, so compositions multiply symbols.  On the padded lattice the
    input is zero-extended and the output restricted to the box.
    """
    if m.grid != f.grid:
        raise ValueError(f"grid mismatch: {f.grid} vs {m.grid}")
    grid = f.grid
    F = np.fft.fft2(_embed(grid, f.values, m.padded))
    out = np.fft.ifft2(F * m.coeffs)[: grid.n, : grid.n]
    real = f.is_real and m.coeffs.dtype.kind == "f" and _is_even(m)
    return GridFunction(grid, _real_if(out, real))


def _is_even(m: SpectralFunction) -> bool:
    # m(-xi) == m(xi) on the lattice keeps real inputs real
    c = m.coeffs
    flipped = np.roll(c[::-1, ::-1], 1, axis=(0, 1))
    return bool(np.array_equal(c, flipped))


def lp_norm(f: GridFunction, p: float = 2.0) -> float:
    """Riemann-sum Lp norm ``(sum |f|^p h^d)^(1/p)``; the max norm for ``p = inf``."""
    if p == np.inf:
        return float(np.max(np.abs(f.values)))
    if not p >= 1:
        raise ValueError(f"p must be >= 1 or inf, got {p!r}")
    a = np.abs(f.values).ravel()
    if p == 2:
        return float(np.sqrt(np.sum(a * a) * f.grid.cell_volume))
    return float((np.sum(a**p) * f.grid.cell_volume) ** (1.0 / p))


def inner(f: GridFunction, g: GridFunction) -> complex:
    """``<f, g> = sum f conj(g) h^d`` (fixed summation order)."""
    if f.grid != g.grid:
        raise ValueError("grid mismatch")
    return complex(np.sum((f.values * np.conj(g.values)).ravel()) * f.grid.cell_volume)
