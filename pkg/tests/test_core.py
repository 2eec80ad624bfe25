import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from padic_diffusion.core import (BELOW_RESOLUTION, CellGrid, PAdicPoint, SpaceConfig, add, cell_distance,
                                  character, character_sphere_integral, fractional_part, haar_ball,
                                  haar_sphere, neg, norm_exponent, sub)
from padic_diffusion.errors import InsufficientPrecision, ValidationError

P2 = SpaceConfig(2, 1)
P3 = SpaceConfig(3, 1)
P2D = SpaceConfig(2, 2)


def test_config_rejects_non_prime():
    with pytest.raises(ValidationError, match="prime"):
        SpaceConfig(4, 1)
    with pytest.raises(ValidationError):
        SpaceConfig(2, 0)


def test_zero_is_below_resolution():
    assert PAdicPoint.zero(P2, 1, 2).norm_exponent() is BELOW_RESOLUTION


def test_leading_digit_sets_norm():
    # digits listed from the p^-N position upwards: (1,0,0) is 2^-1
    x = PAdicPoint(P2, 1, 2, ((1, 0, 0),))
    assert norm_exponent(x) == 1


def test_norm_is_max_over_coordinates():
    # coordinate exponents 0 and -1
    x = PAdicPoint.from_rationals(P2D, 1, 3, [1, 2])
    assert x.coordinate_norm_exponents() == (0, -1)
    assert x.norm_exponent() == 0


def test_identity_inverse_and_carry():
    x = PAdicPoint.from_rationals(P3, 2, 2, [Fraction(5, 9)])
    zero = PAdicPoint.zero(P3, 2, 2)
    assert x + zero == x
    assert add(neg(x), x) == zero
    one = PAdicPoint(P2, 0, 3, ((1, 0, 0),))
    two = add(one, one)
    assert two.digits == ((0, 1, 0),)


def test_truncation_discards_top_digit():
    # 2^-1 + 2^-1 = 1 has norm 1 and lives on; in B_0 the sum 1 + 1 = 2 stays, 4 + 4 = 8 = 0 at K=3
    x = PAdicPoint.from_integers(P2, 0, 3, [4])
    assert (x + x).norm_exponent() is BELOW_RESOLUTION


def test_mismatched_grids_rejected():
    with pytest.raises(ValidationError):
        add(PAdicPoint.zero(P2, 1, 2), PAdicPoint.zero(P2, 1, 3))


def test_fractional_part():
    assert fractional_part(PAdicPoint.from_rationals(P2, 3, 2, [7])) == 0
    assert fractional_part(PAdicPoint.from_rationals(P2, 1, 2, [Fraction(1, 2)])) == Fraction(1, 2)
    assert fractional_part(PAdicPoint.from_rationals(P3, 1, 2, [Fraction(2, 3) + 1])) == Fraction(2, 3)
    assert fractional_part(PAdicPoint.from_rationals(P3, 2, 1, [Fraction(7, 9)])) == Fraction(7, 9)


def test_fractional_part_needs_unit_digit():
    with pytest.raises(InsufficientPrecision):
        fractional_part(PAdicPoint.from_integers(P2, 3, -1, [1]))


def test_character_values():
    z = PAdicPoint.from_rationals(P2, 1, 2, [Fraction(1, 2)])
    x = PAdicPoint.from_rationals(P2, 1, 2, [1])
    assert character(z, x) == pytest.approx(-1)
    small = PAdicPoint.from_rationals(P2, 1, 2, [2])
    assert character(z, small) == 1


def test_character_refuses_unresolved_product():
    # z = 2^-2 known only to p^0, x = 2^-1 known only to p^0: the product's digits are not determined
    z = PAdicPoint.from_rationals(P2, 2, 0, [Fraction(1, 4)])
    x = PAdicPoint.from_rationals(P2, 1, 0, [Fraction(1, 2)])
    with pytest.raises(InsufficientPrecision):
        character(z, x)


def test_haar_measures():
    for cfg in (P2, P3, P2D):
        assert haar_ball(0, cfg) == 1
    assert haar_sphere(0, P2) == Fraction(1, 2)
    for cfg in (P2, P3, P2D):
        assert sum(haar_sphere(j, cfg) for j in range(-39, 4)) + haar_ball(-40, cfg) == haar_ball(3, cfg)


def _brute_sphere_character(j, z_exp, cfg):
    """Character of ``z = p^-z_exp`` (first coordinate) summed over all cells of ``S_j``."""
    K = max(1, z_exp, 1 - j)
    grid = CellGrid(cfg, j, K)
    z = PAdicPoint.from_integers(cfg, K, j, [cfg.p ** (K - z_exp)] + [0] * (cfg.n - 1))
    chars = grid.characters(z).real
    on_sphere = grid.norm_levels() - grid.K == j
    return math.fsum(chars[on_sphere]) * float(cfg.p) ** (-cfg.n * grid.K)


@pytest.mark.parametrize("cfg", [P2, P3, P2D])
@pytest.mark.parametrize("j", [-1, 0, 1, 2])
@pytest.mark.parametrize("z_exp", [-2, -1, 0, 1, 2])
def test_sphere_character_integral_vs_cells(cfg, j, z_exp):
    expected = _brute_sphere_character(j, z_exp, cfg)
    assert float(character_sphere_integral(j, z_exp, cfg)) == pytest.approx(expected, abs=1e-12)


def test_sphere_character_cases():
    assert character_sphere_integral(2, -2, P3) == haar_sphere(2, P3)
    assert character_sphere_integral(2, -1, P3) == -haar_ball(1, P3)
    assert character_sphere_integral(2, 0, P3) == 0


@pytest.mark.parametrize("cfg,N,K", [(P2, 2, 3), (P3, 1, 2), (P2D, 1, 2)])
def test_formula_ball_character_sum(cfg, N, K):
    grid = CellGrid(cfg, N, K)
    dual = CellGrid(cfg, K, N)
    cell = float(cfg.p) ** (-cfg.n * K)
    for zi in range(dual.size):
        z = PAdicPoint.from_integers(cfg, K, N, dual.coords([zi])[0])
        total = grid.characters(z).sum() * cell
        e = z.norm_exponent()
        expected = float(haar_ball(N, cfg)) if e is BELOW_RESOLUTION or e <= -N else 0.0
        assert abs(total - expected) <= 1e-10


def test_digits_round_trip():
    grid = CellGrid(P3, 1, 2)
    idx = np.arange(grid.size)
    assert np.array_equal(grid.from_coords(grid.coords(idx)), idx)
    for i in (0, 5, 26):
        assert grid.index(grid.point(i)) == i


def test_cell_distance():
    grid = CellGrid(P2, 2, 2)
    assert cell_distance(3, 3, grid) is BELOW_RESOLUTION
    # cells differing only in the coarsest digit
    assert cell_distance(0, 2 ** (grid.L - 1), grid) == grid.N
    assert cell_distance(1, 6, grid) == cell_distance(6, 1, grid)


def test_character_matrix_matches_scalar_character():
    grid = CellGrid(P3, 1, 1)
    z = PAdicPoint.from_integers(P3, 1, 1, [4])
    vec = grid.characters(z)
    for i in range(grid.size):
        assert vec[i] == pytest.approx(character(z, grid.point(i)), abs=1e-15)


def test_quarter_turn_phases_are_exact():
    # ||z|| = 4 on B_0: every z.x has fractional part in {0, 1/4, 1/2, 3/4}
    grid = CellGrid(P2, 0, 2)
    z = PAdicPoint.from_integers(P2, 2, 0, [1])
    vals = grid.characters(z)
    assert len(set(np.round(vals, 12))) == 4
    assert set(np.round(vals, 12)) <= {1, 1j, -1, -1j}
    assert np.all(vals.real ** 2 + vals.imag ** 2 == 1.0)


points = st.tuples(st.sampled_from([(2, 1), (3, 1), (2, 2), (5, 1)]), st.integers(-1, 2), st.integers(0, 10 ** 6),
                   st.integers(0, 10 ** 6), st.integers(0, 10 ** 6), st.integers(0, 10 ** 6))


@given(points)
def test_ultrametric_inequality(args):
    (p, n), N, a1, a2, b1, b2 = args
    cfg = SpaceConfig(p, n)
    K = 3 - N
    x = PAdicPoint.from_integers(cfg, N, K, [a1, a2][:n])
    y = PAdicPoint.from_integers(cfg, N, K, [b1, b2][:n])
    s = x + y
    ex, ey, es = x.norm_exponent(), y.norm_exponent(), s.norm_exponent()
    assert es <= max(ex, ey)
    if ex != ey:
        assert es == max(ex, ey)
    assert sub(s, y) == x


@given(points)
def test_character_is_multiplicative(args):
    (p, n), N, a1, a2, b1, b2 = args
    cfg = SpaceConfig(p, n)
    K = 3 - N
    grid = CellGrid(cfg, N, K)
    z = PAdicPoint.from_integers(cfg, K, N, [a1 + b2, a2 + b1][:n])
    x = PAdicPoint.from_integers(cfg, N, K, [a1, a2][:n])
    y = PAdicPoint.from_integers(cfg, N, K, [b1, b2][:n])
    lhs = character(z, x + y)
    assert abs(lhs - character(z, x) * character(z, y)) <= 1e-12
    assert abs(abs(lhs) - 1) <= 1e-12
    assert grid.characters(z, [grid.index(x + y)])[0] == pytest.approx(lhs, abs=1e-12)
