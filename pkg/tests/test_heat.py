import math

import mpmath
import pytest
from hypothesis import given, strategies as st

from padic_diffusion.core import haar_sphere
from padic_diffusion.errors import ValidationError
from padic_diffusion.heat import (RadialFunction, chapman_kolmogorov_check, dt_z, kernel_table,
                                  radial_inverse_fourier, sphere_mass_total, upper_bound, z_center_mass,
                                  z_full, z_symbol_moment)
from padic_diffusion.spectral import KernelParams, a_w

mpmath.mp.dps = 50


def mp_symbol(gamma, p, n, alpha):
    p = mpmath.mpf(p)
    head = p ** (n * (gamma + 1)) / p ** ((gamma + 1) * alpha)
    r = p ** (n - alpha)
    # geometric tail of (1 - p^-n) p^(j(n - alpha)) from j = gamma + 2
    return head + (1 - p ** -n) * r ** (gamma + 2) / (1 - r)


def mp_kernel(t, beta, p, n, alpha, weight=None):
    """Oracle: Z = sum_{k <= -beta} |S_k| g(p^k) - p^(-n beta) g(p^(1-beta)), g = weight(A) at 50 digits."""
    weight = weight or (lambda A: mpmath.exp(-t * A))
    pm = mpmath.mpf(p)
    g = lambda k: weight(mp_symbol(-k, p, n, alpha))
    body = mpmath.nsum(lambda m: (1 - pm ** -n) * pm ** (n * (-beta - m)) * g(-beta - m), [0, mpmath.inf])
    return body - pm ** (-n * beta) * g(1 - beta)


CASES = [(2, 1), (3, 1), (2, 2)]


@pytest.mark.parametrize("p,n", CASES)
@pytest.mark.parametrize("t", [1e-3, 0.1, 1.0, 10.0])
@pytest.mark.parametrize("beta", [-6, -1, 0, 2, 8])
def test_kernel_vs_mpmath(p, n, t, beta):
    P = KernelParams.default(p, n)
    expected = float(mp_kernel(t, beta, p, n, 2 * n))
    assert z_full(t, beta, P) == pytest.approx(expected, rel=1e-13)


@pytest.mark.parametrize("p,n", CASES)
@pytest.mark.parametrize("t,beta", [(0.01, 4), (1.0, -3), (1.0, 3), (10.0, 0)])
def test_dt_kernel_vs_mpmath(p, n, t, beta):
    P = KernelParams.default(p, n)
    expected = float(mp_kernel(t, beta, p, n, 2 * n, weight=lambda A: -A * mpmath.exp(-t * A)))
    assert dt_z(t, beta, P) == pytest.approx(expected, rel=1e-12)


def test_frozen_value():
    # mpmath oracle at p=2, n=1, alpha=2, t=1, ||x||=1
    assert z_full(1.0, 0, KernelParams.default()) == pytest.approx(0.40599651938999926, rel=1e-14)


@pytest.mark.parametrize("p,n", CASES + [(5, 1), (3, 2)])
@pytest.mark.parametrize("t", [0.01, 0.1, 1.0, 10.0])
def test_normalization(p, n, t):
    assert abs(sphere_mass_total(t, KernelParams.default(p, n), -30) - 1) <= 1e-10


def test_center_mass_consistency():
    P = KernelParams.default(3, 1)
    for t in (0.05, 2.0):
        for M in (-3, 0, 4):
            diff = z_center_mass(t, M, P) - z_center_mass(t, M - 1, P)
            assert diff == pytest.approx(z_full(t, M, P) * float(haar_sphere(M, P.space)), abs=1e-10)
            assert z_center_mass(t, M, P) > z_center_mass(t, M - 1, P)
    assert z_center_mass(1e-9, -2, P) == pytest.approx(1.0, abs=1e-7)
    assert z_center_mass(1.0, 60, P) == pytest.approx(1.0, abs=1e-15)


def test_dt_mass_conservation():
    P = KernelParams.default(2, 1)
    for t in (0.1, 1.0, 5.0):
        M = -20
        outer = sphere_mass_total(t, P, M, kernel=lambda b: dt_z(t, b, P)) - z_center_mass(t, M, P)
        # d/dt of the mass inside B_M
        inner = -P.kappa * z_symbol_moment(t, M, P)
        assert abs(outer + inner) <= 1e-10


def test_small_time_far_field():
    P = KernelParams.default(2, 1)
    for beta in (0, 2, 4):
        assert dt_z(1e-4, beta, P) == pytest.approx(P.kappa / P.w(beta), rel=1e-3)
        assert z_full(1e-4, beta, P) * P.w(beta) / 1e-4 == pytest.approx(1.0, rel=1e-3)


def test_upper_bound_power_law():
    for p, n in CASES:
        P = KernelParams.default(p, n)
        for t in (0.01, 1.0, 100.0):
            for beta in range(-10, 12):
                assert z_full(t, beta, P) <= upper_bound(t, beta, P)


def test_upper_bound_fails_for_small_weight_constant():
    # with w = c p^(j alpha) and c < 2^(-alpha/2), the stated constant is too small near the origin
    P = KernelParams.default(2, 1, coef=0.1)
    assert max(z_full(1.0, b, P) / upper_bound(1.0, b, P) for b in range(-10, 10)) > 1


def test_chapman_kolmogorov():
    P = KernelParams.default(2, 1)
    for t, s, b in [(0.1, 0.2, -3), (1.0, 0.5, 0), (2.0, 3.0, 5)]:
        assert chapman_kolmogorov_check(t, s, b, P) <= 1e-8
        assert abs(chapman_kolmogorov_check(t, s, b, P) - chapman_kolmogorov_check(s, t, b, P)) <= 1e-12


def test_indicator_transform():
    # g = 1 on ||xi|| <= p^-N  ->  p^(-nN) on B_N and 0 outside
    p, n, N = 3, 1, 1
    g = RadialFunction.tabulate(lambda j: 1.0 if j <= -N else 0.0, -N - 5, 12, at_zero=1.0)
    for beta in range(-4, 4):
        expected = float(p) ** (-n * N) if beta <= N else 0.0
        assert radial_inverse_fourier(g, beta, p, n) == pytest.approx(expected, abs=1e-13)


def test_transform_linearity_and_kernel():
    P = KernelParams.default(2, 1)
    t = 0.7
    window = (-80, 10)
    g = RadialFunction.tabulate(lambda j: math.exp(-t * a_w(-j, P)), *window, at_zero=1.0,
                                env_const=t * 2.0, env_rate=1.0)
    half = RadialFunction.tabulate(lambda j: 0.5 * math.exp(-t * a_w(-j, P)), *window, at_zero=0.5,
                                   env_const=t, env_rate=1.0)
    for beta in (-2, 0, 3):
        assert radial_inverse_fourier(g, beta, 2, 1) == pytest.approx(z_full(t, beta, P), rel=1e-12)
        assert radial_inverse_fourier(half + half, beta, 2, 1) == pytest.approx(z_full(t, beta, P), rel=1e-12)


def test_window_too_short_is_an_error():
    g = RadialFunction.tabulate(lambda j: 0.0, 0, 3)
    with pytest.raises(ValidationError):
        radial_inverse_fourier(g, -5, 2, 1)


def test_time_must_be_positive():
    with pytest.raises(ValidationError):
        z_full(0.0, 0, KernelParams.default())
    with pytest.raises(ValidationError):
        dt_z(-1.0, 0, KernelParams.default())


def test_kernel_table_shape():
    tab = kernel_table([1.0, 2.0], range(-1, 2), KernelParams.default())
    assert tab.shape == (6, 6)


@given(st.sampled_from(CASES), st.floats(1e-3, 50.0), st.integers(-12, 14), st.floats(0.3, 3.0))
def test_kernel_properties(pn, t, beta, kappa):
    P = KernelParams.default(*pn, kappa=kappa)
    z = z_full(t, beta, P)
    assert z >= -1e-10
    assert z <= upper_bound(t, beta, P)
    # radial monotonicity: the kernel decreases away from the origin
    assert z_full(t, beta + 1, P) <= z * (1 + 1e-12) + 1e-300
