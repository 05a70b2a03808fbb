import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from roughcomm.grid import BoxGrid, transfer_function
from roughcomm.kernels import (
    AngularKernel,
    angular_moments,
    constant_kernel,
    dyadic_kernel_values,
    gs_beta_details,
    gs_beta_functional,
    harmonic_kernel,
    load_kernel_file,
    make_dyadic_kernel,
    power_log_kernel,
    project_vanishing_moments,
    resolvable_j_range,
)
from roughcomm.windows import varphi_profile

# int_0^2pi |cos 2t| log^2(1/|cos t|) dt, mpmath quadrature at 30 digits
GS_COS2_BETA2_E1 = 7.530609751746968


def _abs_cos_power(M=4096):
    t = 2 * np.pi * np.arange(M) / M
    with np.errstate(divide="ignore"):
        v = np.abs(np.cos(t)) ** -0.5
    return AngularKernel(np.minimum(v, 1e3), 1, "|cos|^-1/2")


# --- AngularKernel ---------------------------------------------------------


def test_angular_kernel_validation():
    with pytest.raises(ValueError):
        AngularKernel(np.ones(4))
    bad = np.ones(64)
    bad[3] = np.inf
    with pytest.raises(ValueError):
        AngularKernel(bad)
    with pytest.raises(ValueError):
        AngularKernel(np.ones(64), 0)


def test_angular_kernel_interpolates_samples():
    om = harmonic_kernel(3, "sin", M=256)
    assert np.allclose(om(om.angles), om.samples, atol=1e-15)
    # periodic
    assert om(0.3) == pytest.approx(om(0.3 + 2 * np.pi), abs=1e-14)


def test_l1_norm():
    assert constant_kernel(1.0).l1_norm() == pytest.approx(2 * np.pi, rel=1e-14)
    assert harmonic_kernel(2).l1_norm() == pytest.approx(4.0, rel=1e-6)


# --- project_vanishing_moments ---------------------------------------------


def test_cos2_is_unchanged_for_k1():
    om = harmonic_kernel(2)
    out = project_vanishing_moments(om, 1)
    assert np.max(np.abs(out.samples - om.samples)) <= 1e-13


def test_cos1_projects_to_zero():
    out = project_vanishing_moments(harmonic_kernel(1), 1)
    assert np.max(np.abs(out.samples)) <= 1e-13


@pytest.mark.parametrize("k", [1, 2, 3])
def test_projected_moments_vanish_on_samples(k):
    out = project_vanishing_moments(_abs_cos_power(), k)
    assert np.max(np.abs(angular_moments(out, k))) <= 1e-10


def test_projected_moments_vanish_under_finer_quadrature():
    # re-integrate the piecewise-linear interpolant with a 10x finer Simpson rule
    out = project_vanishing_moments(_abs_cos_power(), 1)
    t = np.linspace(0, 2 * np.pi, 10 * out.M + 1)
    v = out(t)
    for mono in (np.cos(t), np.sin(t)):
        assert abs(integrate.simpson(v * mono, x=t)) <= 1e-10


def test_projection_rejects_coarse_sampling():
    with pytest.raises(ValueError):
        project_vanishing_moments(AngularKernel(np.ones(32)), 1)


def test_constant_loses_even_moments_for_k2():
    out = project_vanishing_moments(constant_kernel(1.0), 2)
    assert out.is_zero or np.max(np.abs(out.samples)) <= 1e-14


# --- kernel files -------------------------------------------------------------


def test_load_kernel_file(tmp_path):
    om = harmonic_kernel(2, M=128)
    p = tmp_path / "omega.txt"
    p.write_text("# cos 2 theta\n\n" + "\n".join(repr(float(v)) for v in om.samples) + "\n")
    loaded = load_kernel_file(p, 1)
    assert loaded.M == 128
    assert np.max(np.abs(loaded.samples - om.samples)) <= 1e-13


def test_load_kernel_file_projects(tmp_path):
    p = tmp_path / "omega.txt"
    p.write_text("\n".join("1.0" for _ in range(128)))
    assert np.max(np.abs(load_kernel_file(p, 2).samples)) <= 1e-14


@pytest.mark.parametrize("bad", ["abc", "nan", "inf"])
def test_load_kernel_file_rejects_garbage(tmp_path, bad):
    p = tmp_path / "omega.txt"
    p.write_text("\n".join(["1.0"] * 100 + [bad]))
    with pytest.raises(ValueError):
        load_kernel_file(p)


# --- GS_beta --------------------------------------------------------------------


def test_gs_beta_zero_kernel():
    assert gs_beta_functional(constant_kernel(0.0), 2.0) == 0.0


@settings(max_examples=6, deadline=None)
@given(st.floats(-5, 5).filter(lambda c: abs(c) > 1e-3))
def test_gs_beta_homogeneity(c):
    om = harmonic_kernel(2)
    a = gs_beta_functional(om, 2.0, refine=False)
    b = gs_beta_functional(om.scaled(c), 2.0, refine=False)
    assert b == pytest.approx(abs(c) * a, rel=1e-10)


def test_gs_beta_cos2_matches_quadrature():
    res = gs_beta_details(harmonic_kernel(2), 2.0, refine=False)
    assert res.converged
    # the sup is attained along an axis; sampling cos 2t at 4096 angles costs ~1e-6
    assert res.value == pytest.approx(GS_COS2_BETA2_E1, rel=1e-5)


def test_gs_beta_grows_with_beta():
    om = harmonic_kernel(2)
    vals = [gs_beta_functional(om, b, refine=False) for b in (1.5, 2.0, 3.0)]
    assert vals[0] < vals[1] < vals[2]


def test_gs_beta_power_log_is_finite():
    res = gs_beta_details(power_log_kernel(0.5), 2.0, refine=False)
    assert math.isfinite(res.value) and res.value > 0


# --- dyadic pieces ------------------------------------------------------------------


@pytest.mark.parametrize("n,L,expected", [(128, 2.0, (-3, 0)), (256, 2.0, (-4, 0)), (64, 1.0, (-3, -1))])
def test_resolvable_range(n, L, expected):
    assert resolvable_j_range(BoxGrid(n, L)) == expected


def test_unresolvable_j_rejected():
    with pytest.raises(ValueError):
        make_dyadic_kernel(harmonic_kernel(2), -6, "sharp", BoxGrid(64, 1.0))


def test_zero_kernel_piece():
    K = make_dyadic_kernel(constant_kernel(0.0), -2, "sharp", BoxGrid(64, 1.0))
    assert not np.any(K.values.values)


@pytest.mark.parametrize("flavor", ["sharp", "smooth"])
@pytest.mark.parametrize("j", [-3, -2, -1])
def test_support_in_annulus(flavor, j):
    g = BoxGrid(128, 2.0)
    K = make_dyadic_kernel(harmonic_kernel(2), j, flavor, g)
    lo, hi = K.support
    r = g.radius()
    v = np.abs(K.values.values)
    outside = (r < lo) | (r >= hi) if flavor == "sharp" else (r <= lo) | (r >= hi)
    assert np.sum(v[outside]) <= 1e-12 * np.sum(v)


def test_smooth_piece_values():
    x1, x2 = np.array([0.3, 0.0]), np.array([0.0, 0.3])
    v = dyadic_kernel_values(harmonic_kernel(2), -1, "smooth", x1, x2, 1)
    # cos(0) = 1, cos(pi) = -1; varphi(0.6) = 1 - phi(1.2)
    expected = varphi_profile(0.6) * 0.3**-3
    assert v[0] == pytest.approx(expected, rel=1e-12)
    assert v[1] == pytest.approx(-expected, rel=1e-12)


def _radial_oracle(j, k=1):
    # int over 2^(j-1) <= |x| < 2^j of |x|^(-2-k) dx = 2 pi int r^(-1-k) dr
    return 2 * np.pi * integrate.quad(lambda r: r ** (-1.0 - k), 2.0 ** (j - 1), 2.0**j)[0]


@pytest.mark.parametrize("j", [-3, -2, -1, 0])
def test_l1_norm_of_constant_piece_cell_sampled(j):
    assert _radial_oracle(j) == pytest.approx(2 * np.pi * 2.0**-j, rel=1e-12)
    g = BoxGrid(256, 2.0)
    K = make_dyadic_kernel(constant_kernel(1.0), j, "sharp", g, sampling="cell")
    assert K.l1_norm() == pytest.approx(_radial_oracle(j), rel=0.02)


def test_l1_norm_point_sampling_converges():
    # point samples resolve the finest piece only to ~9% at n = 256
    g = BoxGrid(256, 2.0)
    errs = [abs(make_dyadic_kernel(constant_kernel(1.0), j, "sharp", g).l1_norm() / _radial_oracle(j) - 1) for j in (-3, -2, -1, 0)]
    assert errs == sorted(errs, reverse=True)
    assert errs[-1] <= 0.02


@pytest.mark.parametrize("k", [1, 2])
def test_l1_norm_scales_like_2_to_minus_jk(k):
    g = BoxGrid(256, 2.0)
    om = project_vanishing_moments(harmonic_kernel(3), k)
    ratios = [
        make_dyadic_kernel(om, j, "smooth", g, sampling="cell").l1_norm() * 2.0 ** (j * k) / om.l1_norm() for j in (-3, -2, -1, 0)
    ]
    assert max(ratios) / min(ratios) <= 1.1


# --- invariants --------------------------------------------------------------------------


@pytest.mark.parametrize("k", [1, 2, 3])
def test_projection_is_idempotent(k):
    once = project_vanishing_moments(_abs_cos_power(), k)
    twice = project_vanishing_moments(once, k)
    assert np.max(np.abs(twice.samples - once.samples)) <= 1e-12 * np.max(np.abs(once.samples))


def test_gs_beta_monotone_under_domination():
    t = 2 * np.pi * np.arange(4096) / 4096
    big = AngularKernel(np.abs(np.cos(2 * t)) + 0.1 * np.abs(np.sin(5 * t)))
    small = AngularKernel(np.cos(2 * t) * np.abs(np.sin(3 * t)))
    assert np.all(np.abs(small.samples) <= np.abs(big.samples))
    assert gs_beta_functional(small, 2.0, refine=False) <= gs_beta_functional(big, 2.0, refine=False) + 1e-9


@pytest.mark.parametrize("k", [1, 2])
@pytest.mark.parametrize("flavor", ["sharp", "smooth"])
def test_dyadic_rescaling_of_the_unit_piece(k, flavor):
    # K_j(x) = 2^(-j(d+k)) K_0(2^-j x) by homogeneity of Omega(x/|x|) |x|^(-d-k)
    g = BoxGrid(256, 2.0)
    om = project_vanishing_moments(harmonic_kernel(3), k)
    x1, x2 = g.coords()
    lo, hi = resolvable_j_range(g)
    for j in range(lo, hi + 1):
        direct = make_dyadic_kernel(om, j, flavor, g, k).values.values
        rescaled = 2.0 ** (-j * (2 + k)) * dyadic_kernel_values(om, 0, flavor, 2.0**-j * x1, 2.0**-j * x2, k)
        assert np.sum(np.abs(direct - rescaled)) <= 1e-3 * np.sum(np.abs(direct))


def test_transform_at_zero_is_the_integral():
    g = BoxGrid(128, 2.0)
    for j in (-3, -1):
        K = make_dyadic_kernel(_abs_cos_power(), j, "smooth", g).values
        assert transfer_function(K)[0, 0].real == pytest.approx(K.integral(), rel=1e-12, abs=1e-12)
