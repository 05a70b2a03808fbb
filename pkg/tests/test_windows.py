import numpy as np
import pytest
from scipy import integrate, special

from roughcomm.grid import BoxGrid
from roughcomm.windows import (
    bump,
    bump_transform,
    build_windows,
    phi_profile,
    radial_transfer_quadrature,
    reproducing_integral,
    smooth_step,
    varphi_profile,
)


@pytest.fixture(scope="module")
def w1():
    return build_windows(1)


@pytest.fixture(scope="module")
def w2():
    return build_windows(2)


def test_bump_profile():
    assert bump(0.0) == 1.0
    assert bump(1.0) == 0.0 and bump(1.5) == 0.0
    r = np.linspace(0, 0.999, 200)
    assert np.all(np.diff(bump(r)) <= 0)


def test_smooth_step_limits():
    t = np.linspace(-1, 2, 301)
    s = smooth_step(t)
    assert np.all(s[t <= 0] == 0) and np.all(s[t >= 1] == 1)
    assert np.all(np.diff(s) >= 0)
    assert smooth_step(0.5) == pytest.approx(0.5, abs=1e-15)


def test_phi_plateau_and_support():
    r = np.linspace(0, 3, 3001)
    p = phi_profile(r)
    assert np.all(p[r <= 1] == 1) and np.all(p[r >= 2] == 0)
    assert np.all(np.diff(p) <= 0)


def test_varphi_telescopes_to_one():
    rng = np.random.default_rng(0)
    r = 10.0 ** rng.uniform(-5, 5, 10_000)
    total = sum(varphi_profile(r * 2.0 ** (-j)) for j in range(-25, 26))
    assert np.max(np.abs(total - 1)) <= 1e-14


def test_varphi_support(w1):
    r = np.linspace(0, 3, 3001)
    v = w1.varphi(r)
    assert np.all(v[(r <= 0.5) | (r >= 2)] == 0)
    assert np.all(w1.varphi_j(r, -1)[(r <= 0.25) | (r >= 1)] == 0)


def test_bump_transform_matches_direct_quadrature():
    bt = bump_transform()
    z = np.concatenate([np.linspace(0, 4, 41), np.linspace(4.01, 200, 300)])
    ref = radial_transfer_quadrature(bump, z, 1.0, 3000)
    assert np.max(np.abs(bt(z) - ref)) <= 1e-10


def test_bump_transform_at_zero_is_mass():
    # 2 pi int_0^1 b(r) r dr by adaptive quadrature
    mass = 2 * np.pi * integrate.quad(lambda r: float(bump(r)) * r, 0, 1, epsabs=1e-14)[0]
    assert bump_transform()(0.0) == pytest.approx(mass, rel=1e-12)


def test_psi_has_zero_integral(w1):
    assert w1.psi_hat(0.0) == 0.0
    mass = 2 * np.pi * integrate.quad(lambda r: float(w1.psi(r)) * r, 0, 1, epsabs=1e-14, limit=200)[0]
    assert abs(mass) <= 1e-10


@pytest.mark.parametrize("n,L,s", [(64, 1.0, 0.1), (128, 2.0, 0.25), (256, 2.0, 0.05)])
def test_sampled_psi_s_has_zero_sum(w1, n, L, s):
    g = BoxGrid(n, L)
    v = w1.psi_s(g, s)
    assert abs(np.sum(v.values) * g.cell_volume) <= 1e-10
    assert np.all(v.values[g.radius() >= s] == 0)


def test_reproducing_constant_on_default_mesh(w1):
    assert reproducing_integral(w1.psi_hat) == pytest.approx(1.0, abs=1e-8)


def test_reproducing_constant_on_refined_mesh(w1):
    # independent oracle: psi_hat from direct Bessel quadrature of the psi
    # profile (not the tabulated bump transform), integrated on a mesh twice as
    # fine with a wider range
    u = np.linspace(np.log(1e-3), np.log(800.0), 8001)
    s = np.exp(u)
    ph = radial_transfer_quadrature(w1.psi, s, 1.0, 1500)
    I = integrate.simpson(ph**4, x=u)
    assert abs(I - 1) <= 1e-6


def test_varpi_partition_of_unity(w1):
    rng = np.random.default_rng(1)
    rho = 10.0 ** rng.uniform(-6, 6, 10_000)
    total = sum(w1.varpi(rho * 2.0 ** (-l)) ** 3 for l in range(-25, 26))
    assert np.max(np.abs(total - 1)) <= 1e-10


def test_varpi_support(w1):
    rho = np.linspace(0, 8, 8001)
    v = w1.varpi(rho)
    assert np.all(v[(rho <= 0.25) | (rho >= 4)] == 0)
    assert np.all(v >= 0)


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_omega_support_and_mass(k):
    w = build_windows(k)
    assert w.omega_support <= 0.25
    assert w.omega(0.25) == 0.0
    mass = 2 * np.pi * integrate.quad(lambda r: float(w.omega(r)) * r, 0, 0.25, epsabs=1e-15, limit=200)[0]
    assert mass == pytest.approx(1.0, abs=1e-10)


def _cartesian_moment(w, a, b):
    # int x1^a x2^b omega(x) dx = int_0^R r^(a+b+1) omega(r) dr * int_0^2pi cos^a sin^b
    radial = integrate.quad(lambda r: float(w.omega(r)) * r ** (a + b + 1), 0, w.omega_support, epsabs=1e-16, limit=400)[0]
    # trapezoid on 64 equispaced angles is exact for this trigonometric polynomial
    t = 2 * np.pi * np.arange(64) / 64
    angular = 2 * np.pi * np.mean(np.cos(t) ** a * np.sin(t) ** b)
    return radial * angular


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_omega_vanishing_moments(k):
    w = build_windows(k)
    for order in range(1, k + 1):
        for a in range(order + 1):
            assert abs(_cartesian_moment(w, a, order - a)) <= 1e-10


def test_omega_is_a_positive_bump_for_k1(w1):
    r = np.linspace(0, 0.25, 500)
    assert np.all(w1.omega(r) >= 0)


def test_omega_defect_small_argument(w2):
    # 1 - omega_hat(rho) = O(rho^(k+1)); for even k+1 the leading term vanishes too
    rho = np.array([1e-3, 1e-2])
    d = w2.omega_defect(rho)
    assert np.all(np.abs(d) <= 1e-4 * rho**3)
    assert np.max(np.abs(w2.omega_defect(np.array([10.0, 50.0])) - (1 - w2.omega_hat(np.array([10.0, 50.0]))))) <= 1e-14


def test_omega_hat_matches_quadrature(w2):
    rho = np.array([0.0, 1.0, 7.0, 40.0])
    ref = radial_transfer_quadrature(w2.omega, rho, 0.25, 3000)
    assert np.max(np.abs(w2.omega_hat(rho) - ref)) <= 1e-10


def test_build_windows_rejects_bad_k():
    with pytest.raises(ValueError):
        build_windows(0)


def test_bessel_reference_sanity():
    # J0 transfer of the unit disc indicator: 2 pi J1(rho) / rho
    rho = np.array([0.5, 3.0, 10.0])
    ref = radial_transfer_quadrature(lambda r: np.ones_like(r), rho, 1.0, 400)
    assert np.allclose(ref, 2 * np.pi * special.j1(rho) / rho, atol=1e-12)


def _normalized_slope(v, x, width):
    # max |dv/dx| * support width / max |v|: no spikes from the normalizations
    return np.max(np.abs(np.diff(v) / np.diff(x))) * width / np.max(np.abs(v))


@pytest.mark.parametrize("k", [1, 2, 3])
def test_window_smoothness_proxy(k):
    w = build_windows(k)
    r = np.linspace(0, 3, 30001)
    assert _normalized_slope(w.phi(r), r, 2.0) <= 10
    assert _normalized_slope(w.omega(r), r, w.omega_support) <= 10
    # varpi lives on the geometric annulus [1/4, 4]; its natural variable is log2 rho
    u = np.linspace(-3, 3, 30001)
    assert _normalized_slope(w.varpi(2.0**u), u, 4.0) <= 10
