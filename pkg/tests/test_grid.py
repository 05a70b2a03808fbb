import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roughcomm.grid import (
    BoxGrid,
    GridFunction,
    SpectralFunction,
    apply_multiplier,
    convolve,
    correlate,
    fft_forward,
    fft_inverse,
    inner,
    lp_norm,
    transfer_function,
)


def _random(grid, rng, inner_only=True, complex_=False):
    v = rng.standard_normal(grid.shape)
    if complex_:
        v = v + 1j * rng.standard_normal(grid.shape)
    if inner_only:
        v = v * grid.inner_mask(0.5)
    return GridFunction(grid, v)


def _gaussian(grid, sigma):
    x1, x2 = grid.coords()
    return GridFunction(grid, np.exp(-(x1**2 + x2**2) / (2 * sigma**2)))


# --- BoxGrid ---------------------------------------------------------------


@pytest.mark.parametrize("n", [3, 6, 100, 0])
def test_grid_rejects_non_power_of_two(n):
    with pytest.raises(ValueError):
        BoxGrid(n, 1.0)


def test_grid_rejects_bad_geometry():
    with pytest.raises(ValueError):
        BoxGrid(64, -1.0)
    with pytest.raises(ValueError):
        BoxGrid(64, 1.0, pad_factor=1)


@pytest.mark.parametrize("n,L", [(64, 1.0), (128, 2.0), (256, 1.0)])
def test_grid_geometry(n, L):
    g = BoxGrid(n, L)
    assert g.spacing * g.n == 2 * L
    assert g.padded_n == 2 * n
    x = g.axis()
    assert x[0] == -L and x[g.origin_index] == 0.0
    assert g.refined().n == 2 * n and g.refined().half_width == L


def test_inner_mask_is_half_box():
    g = BoxGrid(64, 1.0)
    m = g.inner_mask(0.5)
    x1, x2 = g.coords()
    assert np.array_equal(m, (x1 >= -0.5) & (x1 < 0.5) & (x2 >= -0.5) & (x2 < 0.5))


# --- GridFunction ----------------------------------------------------------


def test_gridfunction_rejects_nonfinite_and_shape():
    g = BoxGrid(16, 1.0)
    bad = np.zeros(g.shape)
    bad[3, 3] = np.nan
    with pytest.raises(ValueError):
        GridFunction(g, bad)
    with pytest.raises(ValueError):
        GridFunction(g, np.zeros((8, 8)))


def test_gridfunction_grid_mismatch():
    a, b = BoxGrid(16, 1.0), BoxGrid(32, 1.0)
    with pytest.raises(ValueError):
        convolve(a.ones(), b.ones())


# --- fft_forward -------------------------------------------------------------


def test_delta_has_constant_modulus_spectrum():
    g = BoxGrid(64, 1.0)
    d = np.zeros(g.shape)
    d[g.origin_index, g.origin_index] = 1.0 / g.cell_volume
    F = fft_forward(GridFunction(g, d))
    assert np.allclose(np.abs(F.coeffs), 1.0 / (2 * np.pi), rtol=0, atol=1e-14)


@pytest.mark.parametrize("padded", [True, False])
def test_gaussian_transform_matches_closed_form(padded):
    # unitary convention: f_hat(xi) = sigma^2 exp(-sigma^2 |xi|^2 / 2)
    g = BoxGrid(256, 1.0)
    sigma = g.half_width / 8
    F = fft_forward(_gaussian(g, sigma), padded=padded)
    xi1, xi2 = g.dual_coords(padded)
    exact = sigma**2 * np.exp(-(sigma**2) * (xi1**2 + xi2**2) / 2)
    assert np.max(np.abs(F.coeffs - exact)) <= 1e-8


def test_transfer_function_at_zero_is_integral():
    g = BoxGrid(64, 1.0)
    f = _random(g, np.random.default_rng(0))
    T = transfer_function(f)
    assert T[0, 0] == pytest.approx(f.integral(), rel=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2**31))
def test_fft_linearity(alpha, beta, seed):
    g = BoxGrid(32, 1.0)
    rng = np.random.default_rng(seed)
    f, h = _random(g, rng), _random(g, rng)
    lhs = fft_forward(f * alpha + h * beta).coeffs
    rhs = alpha * fft_forward(f).coeffs + beta * fft_forward(h).coeffs
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * (1 + np.max(np.abs(rhs)))


@pytest.mark.parametrize("padded", [True, False])
def test_round_trip(padded):
    g = BoxGrid(64, 1.0)
    f = _random(g, np.random.default_rng(1), inner_only=padded, complex_=True)
    back = fft_inverse(fft_forward(f, padded=padded))
    assert np.linalg.norm(back.values - f.values) <= 1e-12 * np.linalg.norm(f.values)


def test_parseval():
    g = BoxGrid(64, 1.0)
    f = _random(g, np.random.default_rng(2))
    assert fft_forward(f).norm() == pytest.approx(f.norm(), rel=1e-12)


@pytest.mark.parametrize("padded", [True, False])
def test_plancherel_on_100_random_functions(padded):
    g = BoxGrid(32, 1.0)
    rng = np.random.default_rng(12)
    worst = 0.0
    for _ in range(100):
        f = _random(g, rng, inner_only=padded, complex_=True)
        worst = max(worst, abs(fft_forward(f, padded=padded).norm() / f.norm() - 1))
    assert worst <= 1e-12


# --- convolve / correlate ----------------------------------------------------


def test_convolve_with_delta_is_identity():
    g = BoxGrid(64, 1.0)
    f = _random(g, np.random.default_rng(3))
    d = np.zeros(g.shape)
    d[g.origin_index, g.origin_index] = 1.0 / g.cell_volume
    out = convolve(f, GridFunction(g, d))
    assert np.max(np.abs(out.values - f.values)) <= 1e-12


def test_box_convolved_with_itself_is_tent_product():
    g = BoxGrid(64, 1.0)
    a = 0.25
    x1, x2 = g.coords()
    # box on [-a, a) convolved with its mirror image (-a, a]: the lattice
    # overlap at offset x is exactly (2a - |x1|)(2a - |x2|)
    box = GridFunction(g, ((x1 >= -a) & (x1 < a) & (x2 >= -a) & (x2 < a)).astype(float))
    mirror = GridFunction(g, ((x1 > -a) & (x1 <= a) & (x2 > -a) & (x2 <= a)).astype(float))
    out = convolve(box, mirror)
    assert out.values[g.origin_index, g.origin_index] == pytest.approx((2 * a) ** 2, rel=1e-12)
    # away from the peak: (2a - |x1|)(2a - |x2|) at lattice offsets
    i = g.origin_index + 4
    x = 4 * g.spacing
    assert out.values[i, i] == pytest.approx((2 * a - x) ** 2, rel=1e-12)


def test_convolution_has_no_wraparound():
    # both factors live in [-L/2, L/2)^2, so the product lives in [-L, L)^2 and
    # must vanish outside the Minkowski sum of the two supports
    g = BoxGrid(64, 1.0)
    rng = np.random.default_rng(13)
    x1, x2 = g.coords()
    m1 = (np.abs(x1 + 0.3) < 0.15) & (np.abs(x2 - 0.2) < 0.1)
    m2 = (np.abs(x1 + 0.2) < 0.2) & (np.abs(x2 + 0.3) < 0.15)
    f = GridFunction(g, rng.standard_normal(g.shape) * m1)
    h = GridFunction(g, rng.standard_normal(g.shape) * m2)
    out = convolve(f, h).values
    inside = (np.abs(x1 + 0.5) <= 0.35 + 1e-12) & (np.abs(x2 + 0.1) <= 0.25 + 1e-12)
    assert np.max(np.abs(out[~inside])) <= 1e-12 * np.max(np.abs(out))


def test_convolution_commutes():
    g = BoxGrid(64, 1.0)
    rng = np.random.default_rng(4)
    f, h = _random(g, rng), _random(g, rng)
    assert np.max(np.abs(convolve(f, h).values - convolve(h, f).values)) <= 1e-12


def test_correlate_is_adjoint_of_convolve():
    g = BoxGrid(32, 1.0)
    rng = np.random.default_rng(5)
    f, h = _random(g, rng, complex_=True), _random(g, rng, complex_=True)
    ker = _random(g, rng, inner_only=False, complex_=True)
    lhs = inner(convolve(f, ker), h)
    rhs = inner(f, correlate(h, ker))
    assert abs(lhs - rhs) <= 1e-12 * abs(lhs)


# --- apply_multiplier --------------------------------------------------------


def test_unit_multiplier_is_identity():
    g = BoxGrid(64, 1.0)
    f = _random(g, np.random.default_rng(6))
    one = SpectralFunction(g, np.ones((g.padded_n, g.padded_n)))
    assert np.max(np.abs(apply_multiplier(f, one).values - f.values)) <= 1e-12


def test_half_space_projection_is_idempotent():
    g = BoxGrid(64, 1.0)
    f = _random(g, np.random.default_rng(7))
    xi1, _ = g.dual_coords(False)
    m = SpectralFunction(g, (xi1 > 0).astype(float), padded=False)
    once = apply_multiplier(f, m)
    twice = apply_multiplier(once, m)
    assert np.max(np.abs(twice.values - once.values)) <= 1e-12


def test_gaussian_multiplier_matches_convolution():
    # m(xi) = exp(-sigma^2 |xi|^2 / 2) is the transfer function of the unit-mass
    # Gaussian of width sigma; sigma = L/16 keeps the kernel inside the box
    g = BoxGrid(128, 2.0)
    sigma = g.half_width / 16
    f = _random(g, np.random.default_rng(8))
    xi1, xi2 = g.dual_coords(True)
    m = SpectralFunction(g, np.exp(-(sigma**2) * (xi1**2 + xi2**2) / 2), padded=True)
    x1, x2 = g.coords()
    ker = GridFunction(g, np.exp(-(x1**2 + x2**2) / (2 * sigma**2)) / (2 * np.pi * sigma**2))
    a, b = apply_multiplier(f, m), convolve(f, ker)
    assert np.linalg.norm(a.values - b.values) * g.spacing <= 1e-8


# --- lp_norm -------------------------------------------------------------------


@pytest.mark.parametrize("p", [1.0, 1.5, 2.0, 4.0, np.inf])
def test_single_cell_norm(p):
    g = BoxGrid(32, 1.0)
    v = np.zeros(g.shape)
    v[5, 7] = 1.0
    expected = 1.0 if p == np.inf else g.spacing ** (2 / p)
    assert lp_norm(GridFunction(g, v), p) == pytest.approx(expected, rel=1e-14)


@settings(max_examples=15, deadline=None)
@given(st.one_of(st.just(0.0), st.floats(1e-6, 10), st.floats(-10, -1e-6)), st.sampled_from([1.0, 2.0, 3.0, np.inf]))
def test_norm_homogeneity(alpha, p):
    g = BoxGrid(16, 1.0)
    f = _random(g, np.random.default_rng(9))
    assert lp_norm(f * alpha, p) == pytest.approx(abs(alpha) * lp_norm(f, p), rel=1e-12)


def test_gaussian_l2_norm():
    g = BoxGrid(256, 1.0)
    sigma = g.half_width / 8
    assert lp_norm(_gaussian(g, sigma), 2) == pytest.approx(np.sqrt(np.pi * sigma**2), rel=1e-6)


@pytest.mark.parametrize("p", [2.0, 3.0, 4.0])
def test_holder_inequality(p):
    g = BoxGrid(32, 1.0)
    rng = np.random.default_rng(14)
    q = p / (p - 1)
    for _ in range(20):
        f, h = _random(g, rng, complex_=True), _random(g, rng, complex_=True)
        assert abs(inner(f, h)) <= lp_norm(f, p) * lp_norm(h, q) * (1 + 1e-12)


def test_lp_norm_rejects_p_below_one():
    g = BoxGrid(16, 1.0)
    with pytest.raises(ValueError):
        lp_norm(g.ones(), 0.5)
