import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from padic_diffusion.ball import BallConfig, apply_transition, assemble_generator
from padic_diffusion.errors import ValidationError
from padic_diffusion.pme import (Nonlinearity, SolverConfig, accretivity_probe, halving_study, initial_data, l1_norm,
                                 linear_semigroup_error, load_initial_csv, mass, resolvent_solve, solve_pme, step)
from padic_diffusion.spectral import KernelParams

BALL = BallConfig(KernelParams.default(2, 1), 2, 3)
TWO = BallConfig(KernelParams.default(2, 1), 0, 1)


def test_nonlinearity_power():
    phi = Nonlinearity.power(3.0, 2.0)
    s = np.array([-2.0, -0.5, 0.0, 0.5, 2.0])
    assert phi(s) == pytest.approx(2 * np.sign(s) * np.abs(s) ** 3)
    assert phi.inverse(phi(s)) == pytest.approx(s)
    assert phi.check_growth(s) == pytest.approx(1.0)
    assert Nonlinearity.linear().is_linear


def test_nonlinearity_table():
    phi = Nonlinearity.from_table([(-1, -2), (0, 0), (1, 1), (2, 4)])
    assert phi(np.array([0.5, 1.5, 3.0, -2.0])) == pytest.approx([0.5, 2.5, 7.0, -4.0])
    assert phi.inverse(phi(np.array([-3.0, 0.25, 2.5]))) == pytest.approx([-3.0, 0.25, 2.5])
    with pytest.raises(ValidationError):
        Nonlinearity.from_table([(-1, 1), (1, 0)])
    with pytest.raises(ValidationError):
        Nonlinearity.from_table([(-1, -1), (1, 2), (2, 3)] + [(0, 0.5)])
    with pytest.raises(ValidationError):
        Nonlinearity.power(0.5)


def test_solver_config_validation():
    with pytest.raises(ValidationError):
        SolverConfig(eps_schedule=(1e-4, 1e-2))
    with pytest.raises(ValidationError):
        SolverConfig(dt=0.0)


@pytest.mark.parametrize("m", [1.0, 2.0, 3.0])
def test_constants_are_fixed(m):
    f = np.full(BALL.size, -0.3)
    assert np.array_equal(resolvent_solve(f, 0.0, 0.5, BALL, Nonlinearity.power(m)), f)


def test_two_state_linear_resolvent():
    # (I + dt A) z = f with A = [[1/2, -1/2], [-1/2, 1/2]]
    dt, f = 0.4, np.array([1.0, -2.0])
    A = np.array([[0.5, -0.5], [-0.5, 0.5]])
    expected = np.linalg.solve(np.eye(2) + dt * A, f)
    assert resolvent_solve(f, 0.0, dt, TWO, Nonlinearity.linear()) == pytest.approx(expected, abs=1e-15)


def test_regularised_equation():
    rng = np.random.default_rng(3)
    f = rng.normal(size=BALL.size)
    phi = Nonlinearity.power(2.0)
    eps, dt = 1e-2, 0.2
    z = resolvent_solve(f, eps, dt, BALL, phi)
    G = assemble_generator(BALL).dense()
    assert np.max(np.abs(z + eps * phi(z) - dt * (G @ phi(z)) - f)) <= 1e-12


@pytest.mark.parametrize("m", [1.0, 2.0, 3.0])
def test_maximum_principle_in_resolvent(m):
    phi = Nonlinearity.power(m)
    rng = np.random.default_rng(int(m))
    for _ in range(10):
        f = rng.normal(size=BALL.size) * 3
        z = resolvent_solve(f, 0.0, 0.3, BALL, phi)
        assert np.max(np.abs(z)) <= np.max(np.abs(f)) * (1 + 1e-13)


def test_step_conserves_mass_and_tends_to_identity():
    phi = Nonlinearity.power(2.0)
    u = initial_data("random:1", BALL)
    for dt in (1.0, 1e-2, 1e-5):
        z = step(u, dt, BALL, phi)
        assert abs(mass(z, BALL) - mass(u, BALL)) <= 1e-12
    assert l1_norm(step(u, 1e-6, BALL, phi) - u, BALL) <= 1e-5


def test_trajectory_invariants():
    phi = Nonlinearity.power(2.0)
    u0 = initial_data("delta", BALL)
    tr = solve_pme(u0, 1.0, 40, BALL, phi)
    assert np.max(np.abs(np.diff(tr.masses()))) <= 1e-12
    assert np.all(np.diff(tr.linf()) <= 1e-13 * tr.linf()[0])
    assert np.max(tr.step_residuals(phi)) <= 1e-12
    assert tr.l1_diff_prev()[0] == 0.0
    const = solve_pme(np.full(BALL.size, 0.4), 1.0, 5, BALL, phi)
    assert all(np.array_equal(z, const.states[0]) for z in const.states)


def test_l1_contraction_along_trajectories():
    phi = Nonlinearity.power(3.0)
    a = solve_pme(initial_data("random:4", BALL), 1.0, 20, BALL, phi)
    b = solve_pme(initial_data("delta", BALL), 1.0, 20, BALL, phi)
    d = [l1_norm(x - y, BALL) for x, y in zip(a.states, b.states)]
    assert all(d2 <= d1 + 1e-12 for d1, d2 in zip(d, d[1:]))


def test_comparison_principle():
    phi = Nonlinearity.power(2.0)
    rng = np.random.default_rng(7)
    for _ in range(20):
        f = rng.normal(size=BALL.size)
        g = f + np.abs(rng.normal(size=BALL.size))
        assert np.all(resolvent_solve(g, 0.0, 0.1, BALL, phi) - resolvent_solve(f, 0.0, 0.1, BALL, phi) >= -1e-10)


def test_accretivity_probe():
    phi = Nonlinearity.power(2.0)
    rng = np.random.default_rng(5)
    f = rng.normal(size=BALL.size)
    same = accretivity_probe([(f, f)], 0.1, BALL, phi)
    assert same.max_excess == 0.0
    pairs = [(rng.normal(size=BALL.size), rng.normal(size=BALL.size)) for _ in range(30)]
    rep = accretivity_probe(pairs, 0.1, BALL, phi)
    assert rep.passed and rep.max_ratio <= 1 + 1e-12 and rep.max_flux_ratio <= 2
    lin = accretivity_probe(pairs, 0.1, BALL, Nonlinearity.linear())
    assert lin.max_ratio <= 1 + 1e-12


def test_linear_case_converges_first_order():
    u0 = initial_data("delta", BALL)
    errs = [linear_semigroup_error(u0, 1.0, n, BALL) for n in (50, 100, 200)]
    assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.1)
    assert errs[1] / errs[2] == pytest.approx(2.0, rel=0.05)
    tr = solve_pme(u0, 1.0, 200, BALL, Nonlinearity.linear())
    assert np.max(np.abs(tr.states[-1] - apply_transition(1.0, BALL, u0))) <= errs[2]


def test_linear_error_is_first_order_at_fine_step():
    """At dt = 1e-3 the implicit Euler error of delta data is of order dt, far above 1e-6."""
    u0 = initial_data("delta", BALL)
    err = linear_semigroup_error(u0, 1.0, 1000, BALL)
    assert 1e-3 < err < 1e-2


@pytest.mark.parametrize("m", [1.0, 2.0, 3.0])
def test_halving_ratio(m):
    hs = halving_study(initial_data("delta", BALL), 1.0, 20, BALL, Nonlinearity.power(m))
    assert 1.7 <= hs.ratio <= 2.3
    assert math.isfinite(hs.constant)


def test_half_step_comparison():
    tr = solve_pme(initial_data("delta", BALL), 1.0, 10, BALL, Nonlinearity.power(2.0), compare_half=True)
    assert 0 < tr.half_diff < 1.0


def test_initial_data():
    d = initial_data("delta", BALL)
    assert mass(d, BALL) == 1.0
    ind = initial_data("indicator:0.5", BALL)
    assert ind.sum() == 4 and np.all(ind[:4] == 1)
    r = initial_data("random:3", BALL)
    assert np.array_equal(r, initial_data("random:3", BALL))
    for bad in ("indicator:3", "random:x", "gauss"):
        with pytest.raises(ValidationError):
            initial_data(bad, BALL)


def test_initial_csv(tmp_path):
    f = tmp_path / "u0.csv"
    f.write_text("cell,value\n0,1.5\n3,-2\n")
    u = load_initial_csv(f, BALL)
    assert u[0] == 1.5 and u[3] == -2 and u.sum() == -0.5
    f.write_text("cell,value\n99,1\n")
    with pytest.raises(ValidationError):
        load_initial_csv(f, BALL)
    f.write_text("cell,value\nx,1\n")
    with pytest.raises(ValidationError):
        load_initial_csv(f, BALL)
    f.write_text("a,b\n0,1\n")
    with pytest.raises(ValidationError):
        load_initial_csv(f, BALL)


def test_bad_inputs():
    with pytest.raises(ValidationError):
        resolvent_solve(np.ones(3), 0.0, 0.1, BALL, Nonlinearity.linear())
    with pytest.raises(ValidationError):
        resolvent_solve(np.full(BALL.size, np.nan), 0.0, 0.1, BALL, Nonlinearity.linear())
    with pytest.raises(ValidationError):
        solve_pme(np.ones(BALL.size), 1.0, 0, BALL, Nonlinearity.linear())


@given(st.sampled_from([1.0, 1.5, 2.0, 3.0]), st.integers(0, 10 ** 6), st.floats(1e-3, 5.0))
def test_resolvent_properties(m, seed, dt):
    phi = Nonlinearity.power(m)
    rng = np.random.default_rng(seed)
    f = rng.normal(size=BALL.size) * rng.uniform(0.01, 10)
    g = rng.normal(size=BALL.size) * rng.uniform(0.01, 10)
    zf = resolvent_solve(f, 0.0, dt, BALL, phi)
    zg = resolvent_solve(g, 0.0, dt, BALL, phi)
    assert l1_norm(zf - zg, BALL) <= l1_norm(f - g, BALL) + 1e-10
    assert abs(mass(zf, BALL) - mass(f, BALL)) <= 1e-12 * max(1.0, np.max(np.abs(f)))
    assert np.max(np.abs(zf)) <= np.max(np.abs(f)) * (1 + 1e-12)


def test_large_terms_converge_by_newton():
    # dt A phi(z) in the thousands: rounding alone exceeds tol * |f|
    f = np.random.default_rng(11).normal(size=BALL.size) * 10
    info = []
    z = resolvent_solve(f, 0.0, 5.0, BALL, Nonlinearity.power(3.0), info=info)
    assert info[-1].method == "newton"
    assert abs(mass(z, BALL) - mass(f, BALL)) <= 1e-12 * 10
