from fractions import Fraction

import mpmath
import pytest
from hypothesis import given, strategies as st

from padic_diffusion.core import SpaceConfig
from padic_diffusion.errors import ValidationError
from padic_diffusion.spectral import (KernelParams, RadialWeight, a_w, a_w_norm, i_ball, lambda_exact,
                                      lambda_n, load_weight_table, verify_symbol_bounds)

mpmath.mp.dps = 40


def mp_symbol(gamma, p, n, alpha, coef=1):
    """Oracle: sphere-by-sphere integral of (1 - chi) / w in 40-digit arithmetic.

    On S_j the character integrates to |S_j| for j <= gamma, to -p^(n(j-1)) for
    j = gamma + 1 and to 0 beyond, so 1 - chi integrates to 0, p^(nj), |S_j|.
    """
    p = mpmath.mpf(p)
    w = lambda j: coef * p ** (j * alpha)
    head = p ** (n * (gamma + 1)) / w(gamma + 1)
    tail = mpmath.nsum(lambda j: (1 - p ** -n) * p ** (n * j) / w(j), [gamma + 2, mpmath.inf])
    return head + tail


def mp_lambda(N, p, n, alpha, coef=1):
    p = mpmath.mpf(p)
    return mpmath.nsum(lambda j: (1 - p ** -n) * p ** (n * j) / (coef * p ** (j * alpha)), [N + 1, mpmath.inf])


P = KernelParams.default(2, 1)


def test_frozen_values():
    assert a_w(-1, P) == pytest.approx(1.5, rel=1e-15)
    assert a_w(0, P) == pytest.approx(0.75, rel=1e-15)
    assert lambda_n(0, P) == pytest.approx(0.5, rel=1e-15)
    assert i_ball(-1, 0, P) == pytest.approx(1.0, rel=1e-15)
    assert lambda_exact(0, P) == Fraction(1, 2)


@pytest.mark.parametrize("p,n", [(2, 1), (3, 1), (2, 2), (5, 1), (3, 2)])
@pytest.mark.parametrize("gamma", [-5, -1, 0, 3, 7])
def test_symbol_vs_mpmath(p, n, gamma):
    K = KernelParams.default(p, n)
    assert a_w(gamma, K) == pytest.approx(float(mp_symbol(gamma, p, n, 2 * n)), rel=1e-14)


@pytest.mark.parametrize("p,n,alpha,coef", [(2, 1, 2, 1), (3, 1, 2.5, 0.7), (2, 2, 5, 2.0)])
@pytest.mark.parametrize("N", [-3, 0, 4])
def test_lambda_vs_mpmath(p, n, alpha, coef, N):
    K = KernelParams.default(p, n, coef=coef, alpha=alpha)
    assert lambda_n(N, K) == pytest.approx(float(mp_lambda(N, p, n, alpha, coef)), rel=1e-14)


def test_telescoping():
    for N in range(-3, 5):
        step = (1 - 0.5) * 2.0 ** (N + 1) / P.w(N + 1)
        assert lambda_n(N, P) - lambda_n(N + 1, P) == pytest.approx(step, rel=1e-14)


def test_scaling_law():
    for p, n in [(2, 1), (3, 2)]:
        K = KernelParams.default(p, n, alpha=2 * n + 0.5)
        for g in range(-3, 4):
            assert a_w(g - 1, K) / a_w(g, K) == pytest.approx(float(p) ** (K.alpha - n), rel=1e-13)


def test_i_ball_cases():
    assert i_ball(None, 2, P) == 0.0
    assert i_ball(2, 2, P) == 0.0
    assert i_ball(5, 2, P) == 0.0
    assert i_ball(1, 2, P) == pytest.approx(a_w(1, P) - lambda_n(2, P))


def test_i_ball_tends_to_symbol():
    for g in (-2, 0, 3):
        assert i_ball(g, 60, P) == pytest.approx(a_w(g, P), rel=1e-15)


def test_norm_form():
    assert a_w_norm(1, P) == a_w(-1, P)


def test_symbol_bounds_power_law():
    rep = verify_symbol_bounds(KernelParams.default(3, 1), range(-4, 5))
    assert rep.ok
    assert rep.c3 == pytest.approx(rep.c4, rel=1e-13)


def _table_params():
    values = {j: 1.3 * 2.0 ** (2 * j) for j in range(-3, 4)}
    values[0] = 1.1
    return KernelParams(SpaceConfig(2, 1), RadialWeight.from_table(values, 2.0, 1.0, 1.5))


def test_tabulated_weight():
    K = _table_params()
    rep = verify_symbol_bounds(K, range(-3, 3))
    assert rep.ok and rep.c3 > 0
    # series vs brute sum over the table plus envelope
    brute = sum((1 - 0.5) * 2.0 ** j / K.w(j) for j in range(1, 200))
    assert lambda_n(0, K) == pytest.approx(brute, rel=1e-14)
    assert K.weight.is_extended(10) and not K.weight.is_extended(0)


def test_weight_validation():
    with pytest.raises(ValidationError, match="increasing"):
        RadialWeight.from_table({0: 2.0, 1: 1.0}, 2.0, 0.5, 4.0)
    with pytest.raises(ValidationError, match="alpha"):
        KernelParams.default(2, 1, alpha=1.0)
    with pytest.raises(ValidationError, match="violates"):
        KernelParams(SpaceConfig(2, 1), RadialWeight.from_table({0: 1.0, 1: 100.0}, 2.0, 0.9, 1.1))


def test_load_weight_table(tmp_path):
    f = tmp_path / "w.csv"
    f.write_text("# alpha=2\n# c1=1\n# c2=2\nj,w\n0,1.5\n1,6\n")
    w = load_weight_table(f)
    assert w.table == ((0, 1.5), (1, 6.0))
    f.write_text("# alpha=2\nj,w\n0,1\n")
    with pytest.raises(ValidationError, match="c1"):
        load_weight_table(f)
    f.write_text("# alpha=2\n# c1=1\n# c2=2\nj,w\n0,abc\n")
    with pytest.raises(ValidationError):
        load_weight_table(f)


@given(st.sampled_from([(2, 1), (3, 1), (2, 2)]), st.integers(-6, 8), st.integers(-4, 6),
       st.floats(0.1, 3.0), st.floats(0.2, 2.0))
def test_symbol_properties(pn, gamma, N, extra, coef):
    p, n = pn
    K = KernelParams.default(p, n, coef=coef, alpha=n + extra)
    assert a_w(gamma, K) > a_w(gamma + 1, K) > 0
    assert lambda_n(N, K) > lambda_n(N + 1, K) > 0
    ib = i_ball(gamma, N, K)
    assert ib >= -1e-15 * a_w(gamma, K)
    if gamma >= N:
        assert ib == 0.0
