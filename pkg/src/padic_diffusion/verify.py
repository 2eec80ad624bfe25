"""The acceptance suite: seven criteria, each a set of named checks with explicit thresholds.

Statistical checks follow a fixed policy: within 3 sigma passes, beyond 4
sigma fails, and anything in between is re-run once with the next seed.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .ball import (BallConfig, assemble_generator, c_prime, c_t, cross_check, spectral_decomposition,
                   z_ball, z_ball_total_mass)
from .core import BELOW_RESOLUTION, CellGrid, character_sphere_integral, haar_sphere
from .heat import (chapman_kolmogorov_check, dt_z, sphere_mass_total, upper_bound, z_full)
from .pme import (Nonlinearity, accretivity_probe, halving_study, initial_data, l1_norm,
                  linear_semigroup_error, mass, resolvent_solve, solve_pme)
from .process import (dual_point, mc_character, mc_full_character, mc_transition_check, simulate_endpoints)
from .report import kernel_csv, solution_csv
from .spectral import (KernelParams, RadialWeight, a_w, i_ball, lambda_n, symbol_upper_constant)

PRESETS = ("quick", "full")


@dataclass
class Check:
    name: str
    value: float
    threshold: float
    passed: bool
    statistical: bool = False
    note: str = ""


@dataclass
class CriterionResult:
    number: int
    title: str
    checks: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def statistical_failure(self) -> bool:
        return any(c.statistical and not c.passed for c in self.checks)

    def add(self, name, value, threshold, passed=None, statistical=False, note=""):
        if passed is None:
            passed = bool(value <= threshold)
        self.checks.append(Check(name, float(value), float(threshold), bool(passed), statistical, note))

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        failed = [c.name for c in self.checks if not c.passed]
        tail = f" (failed: {', '.join(failed)})" if failed else ""
        return f"criterion {self.number} [{status}] {self.title}: {len(self.checks)} checks{tail}"


def _rel(a, b) -> float:
    return abs(a - b) / max(abs(b), 1e-300)


def _spaces(preset):
    base = [(2, 1), (3, 1), (2, 2)]
    return base + [(3, 2), (5, 1)] if preset == "full" else base


def _balls(preset):
    base = [(2, 1, 2, 3), (3, 1, 1, 2), (2, 2, 1, 2), (2, 1, 0, 1)]
    return base + [(2, 1, 3, 5), (3, 2, 1, 1), (3, 1, 2, 3), (2, 1, -2, 5)] if preset == "full" else base


def statistical(run, seed: int):
    """``run(seed) -> (sigma, payload)``; apply the 3/4 sigma policy.

    Returns ``(passed, sigma, payload, note)``.
    """
    sigma, payload = run(seed)
    if sigma <= 3.0:
        return True, sigma, payload, ""
    if sigma > 4.0:
        return False, sigma, payload, f"{sigma:.2f} sigma"
    sigma2, payload2 = run(seed + 1)
    note = f"flaky: {sigma:.2f} sigma, rerun {sigma2:.2f} sigma"
    return sigma2 <= 3.0, sigma2, payload2, note


# -- brute-force oracles --------------------------------------------------------------------


def brute_lambda(N: int, params: KernelParams) -> float:
    """``sum_{j > N} |S_j| / w(p^j)`` term by term."""
    terms = []
    for j in range(N + 1, N + 4000):
        t = float(haar_sphere(j, params.space)) / params.w(j)
        terms.append(t)
        if t < 1e-40:
            break
    return math.fsum(reversed(terms))


def brute_symbol(gamma: int, params: KernelParams) -> float:
    """``sum_j int_{S_j} (1 - chi(z.x)) / w`` with the exact sphere character integrals."""
    ez = -gamma
    terms = []
    for j in range(1 - ez, 1 - ez + 4000):
        t = float(haar_sphere(j, params.space) - character_sphere_integral(j, ez, params.space)) / params.w(j)
        terms.append(t)
        if t < 1e-40:
            break
    return math.fsum(reversed(terms))


def brute_i_ball(z_coords, ball_N: int, K: int, params: KernelParams):
    """``int_{B_N} (1 - chi(z.x)) / w`` summed cell by cell; returns ``(value, ||z|| exponent)``."""
    grid = CellGrid(params.space, ball_N, K)
    z = dual_point(grid, z_coords)
    chars = grid.characters(z).real
    norms = grid.norm_levels() - K
    cell = float(params.p) ** (-params.n * K)
    vals = [(1.0 - c) * cell / params.w(int(j)) for c, j, idx in zip(chars, norms, range(grid.size)) if idx != 0]
    return math.fsum(vals), z.norm_exponent()


def power_closed_form(gamma: int, params: KernelParams) -> float:
    p, n, a = params.p, params.n, params.alpha
    r = float(p) ** (n - a)
    return float(p) ** ((gamma + 1) * (n - a)) / params.weight.coef * (1 + params.sphere_factor * r / (1 - r))


# -- criteria ---------------------------------------------------------------------------------------


def criterion_1(preset="quick") -> CriterionResult:
    res = CriterionResult(1, "spectral formulas")
    gammas = range(-6, 9)
    err_lam = err_a = err_closed = err_series = 0.0
    for p, n in _spaces(preset):
        P = KernelParams.default(p, n)
        fn = RadialWeight.from_function(lambda j, p=p, n=n: float(p) ** (2 * n * j), 2 * n, 1.0, 1.0)
        Pf = KernelParams(P.space, fn, P.kappa)
        for N in range(-4, 6):
            err_lam = max(err_lam, _rel(lambda_n(N, P), brute_lambda(N, P)))
            err_series = max(err_series, _rel(lambda_n(N, Pf), lambda_n(N, P)))
        for g in gammas:
            err_a = max(err_a, _rel(a_w(g, P), brute_symbol(g, P)))
            err_closed = max(err_closed, _rel(a_w(g, P), power_closed_form(g, P)))
            err_series = max(err_series, _rel(a_w(g, Pf), a_w(g, P)))
    res.add("lambda vs sphere sums (rel)", err_lam, 1e-12)
    res.add("A_w vs sphere character sums (rel)", err_a, 1e-12)
    res.add("A_w vs power-law closed form (rel)", err_closed, 1e-12)
    res.add("closed form vs series engine (rel)", err_series, 1e-12)
    err_i = 0.0
    zero_ok = True
    cases = [(2, 1, 0, 3), (2, 1, 2, 2), (3, 1, 1, 2), (2, 2, 1, 2)]
    if preset == "full":
        cases += [(3, 2, 1, 1), (5, 1, 1, 1)]
    for p, n, N, K in cases:
        P = KernelParams.default(p, n)
        grid = CellGrid(P.space, N, K)
        for zi in range(grid.size):
            coords = CellGrid(P.space, K, N).coords([zi])[0]
            brute, ez = brute_i_ball(coords, N, K, P)
            gamma = None if ez is BELOW_RESOLUTION else -ez
            val = i_ball(gamma, N, P)
            err_i = max(err_i, abs(val - brute))
            if (gamma is None or gamma >= N) and val != 0.0:
                zero_ok = False
    res.add("i_ball vs cell character sums (abs)", err_i, 1e-10)
    res.add("i_ball = 0 exactly on ||z|| <= p^-N", 0.0 if zero_ok else 1.0, 0.0)
    return res


def criterion_2(preset="quick") -> CriterionResult:
    res = CriterionResult(2, "heat kernel")
    spaces = _spaces(preset)
    ts = (0.01, 0.1, 1.0, 10.0)
    betas = range(-8, 13)
    neg = norm_err = bound_ratio = ck = fd = 0.0
    c_drift = 0.0
    for p, n in spaces:
        P = KernelParams.default(p, n)
        for t in ts:
            norm_err = max(norm_err, abs(sphere_mass_total(t, P, -30) - 1.0))
            for b in betas:
                z = z_full(t, b, P)
                neg = max(neg, -z)
                bound_ratio = max(bound_ratio, z / upper_bound(t, b, P))
        for t, s in ((0.1, 0.2), (1.0, 0.5), (2.0, 3.0)):
            for b in (-3, 0, 2, 5):
                ck = max(ck, chapman_kolmogorov_check(t, s, b, P))
        for t in ts:
            for b in range(-6, 10):
                h = 1e-5 * t
                d = dt_z(t, b, P)
                f = (z_full(t + h, b, P) - z_full(t - h, b, P)) / (2 * h)
                fd = max(fd, abs(f - d) / abs(d))
        for b in (0, 1, 2, 3):
            cs = [abs(z_full(t, b, P) * P.w(b) / (P.kappa * t) - 1.0) / t for t in (1e-3, 1e-4)]
            c_drift = max(c_drift, abs(cs[1] / cs[0] - 1.0))
    res.add("min Z (negated)", neg, 1e-10)
    res.add("|int Z - 1|", norm_err, 1e-10)
    res.add("max Z / upper bound", bound_ratio, 1.0)
    res.add("Chapman-Kolmogorov residual", ck, 1e-8)
    res.add("dt_z vs central differences (rel)", fd, 1e-6)
    res.add("small-t constant drift between t=1e-3 and 1e-4 (rel)", c_drift, 0.05)
    return res


def criterion_3(preset="quick", seed=1) -> CriterionResult:
    res = CriterionResult(3, "ball kernel: series vs exp(tG) vs Monte Carlo")
    sq = ser = rows = norm = c0 = neg = 0.0
    for p, n, N, K in _balls(preset):
        ball = BallConfig(KernelParams.default(p, n), N, K)
        if ball.size > 256:
            continue
        for t in (0.05, 0.5, 2.0, 10.0):
            rep = cross_check(t, ball, tol=math.inf, series_tol=math.inf)
            sq = max(sq, rep.spectral_vs_squaring)
            ser = max(ser, rep.spectral_vs_series)
            rows = max(rows, rep.row_sum_error)
            norm = max(norm, abs(z_ball_total_mass(t, ball) - 1.0))
            neg = max(neg, max(-z_ball(t, b, ball) for b in range(-K + 1, N + 1)))
        c0 = max(c0, abs(c_t(0.0, ball)), abs(c_prime(0.0, ball)))
    res.add("spectral vs squaring", sq, 1e-9)
    res.add("Z_N series vs transition matrix", ser, 1e-8)
    res.add("row sums", rows, 1e-12)
    res.add("|int_B Z_N - 1|", norm, 1e-10)
    res.add("min Z_N (negated)", neg, 1e-10)
    res.add("|c(0)|, |c'(0)|", c0, 1e-10)
    mc_cases = [((2, 1, 2, 3), 1.0)]
    if preset == "full":
        mc_cases += [((2, 1, 2, 3), 0.2), ((3, 1, 1, 2), 1.0), ((2, 2, 1, 2), 0.5)]
    for (p, n, N, K), t in mc_cases:
        ball = BallConfig(KernelParams.default(p, n), N, K)

        def run(s, ball=ball, t=t):
            rep = mc_transition_check(0, t, 100_000, ball, s)
            return rep.sigma, rep

        ok, sigma, rep, note = statistical(run, seed)
        res.add(f"MC TV p={p} n={n} N={N} K={K} t={t}", rep.tv, rep.envelope, ok, True, note)
    return res


def criterion_4(preset="quick") -> CriterionResult:
    res = CriterionResult(4, "spectrum of the ball generator")
    err = 0.0
    for p, n, N, K in _balls(preset):
        ball = BallConfig(KernelParams.default(p, n), N, K)
        if ball.size > 256:
            continue
        G = assemble_generator(ball)
        ev = np.sort(np.linalg.eigvalsh(G.dense()))
        err = max(err, float(np.max(np.abs(ev - spectral_decomposition(ball).sorted_spectrum()))))
    res.add("sorted eigenvalues vs kappa(lambda_N - A_w)", err, 1e-9)
    two = BallConfig(KernelParams.default(2, 1), 0, 1)
    G = assemble_generator(two)
    ev = np.sort(np.linalg.eigvalsh(G.dense()))
    res.add("two-state spectrum vs {-1, 0}", float(np.max(np.abs(ev - np.array([-1.0, 0.0])))), 1e-12)
    exact_ok = G.exact == (Fraction(1, 2),)
    res.add("two-state rate is exactly 1/2", 0.0 if exact_ok else 1.0, 0.0)
    return res


def _cap_for(t, ball, paths):
    """Smallest cap with truncation bias kappa t lambda_N' below a tenth of the MC error."""
    sigma = 0.5 / math.sqrt(paths)
    cap = ball.N + 1
    while ball.params.kappa * t * lambda_n(cap, ball.params) >= sigma / 10:
        cap += 1
    return cap


def criterion_5(preset="quick", seed=1) -> CriterionResult:
    res = CriterionResult(5, "characteristic functions")
    paths = 100_000
    cases = [((2, 1, 2, 3), 1.0)]
    if preset == "full":
        cases += [((3, 1, 1, 2), 0.5), ((2, 2, 1, 2), 1.0)]
    for (p, n, N, K), t in cases:
        ball = BallConfig(KernelParams.default(p, n), N, K)
        q = p ** n
        dual = CellGrid(ball.params.space, K, N)
        for zi in (q ** (K + N - 1), q ** (K + N - 2), 1):
            coords = dual.coords([zi])[0]

            def run(s, coords=coords, ball=ball, t=t):
                rep = mc_character(dual_point(ball.grid, coords), t, paths, ball, s)
                return rep.zscore, rep

            ok, sigma, rep, note = statistical(run, seed)
            res.add(f"ball chi p={p} n={n} ||z||=p^{dual_point(ball.grid, coords).norm_exponent()}",
                    sigma, 3.0, ok, True, note)
        trivial = mc_character(dual_point(ball.grid, [0] * n), t, 1000, ball, seed)
        res.add("chi(0) = 1 on every path", abs(trivial.mean - 1.0), 0.0)
        cap = _cap_for(t, ball, paths)
        for k in sorted({-N, -N + 1, 0}):
            if k > K:
                continue
            coords = [p ** (K - k)] + [0] * (n - 1)

            def run_full(s, coords=coords, ball=ball, t=t, cap=cap):
                fr = mc_full_character(coords, t, paths, ball, cap, s)
                return fr.report.zscore, fr

            ok, sigma, fr, note = statistical(run_full, seed)
            res.add(f"full-space chi p={p} n={n} ||z||=p^{k} (cap p^{cap})", sigma, 3.0, ok, True, note)
    return res


def _pme_ball(p=2, n=1, N=2, K=3):
    return BallConfig(KernelParams.default(p, n), N, K)


def criterion_6(preset="quick", seed=1) -> CriterionResult:
    res = CriterionResult(6, "porous-medium solver")
    rng = np.random.default_rng(seed)
    balls = [_pme_ball()] + ([_pme_ball(3, 1, 1, 2), _pme_ball(2, 2, 1, 1)] if preset == "full" else [])
    stat = drift = linf = 0.0
    for ball in balls:
        for m in (1.0, 2.0, 3.0):
            phi = Nonlinearity.power(m)
            const = np.full(ball.size, 0.7)
            tr = solve_pme(const, 1.0, 20, ball, phi)
            stat = max(stat, max(float(np.max(np.abs(z - const))) for z in tr.states))
            for u0 in (initial_data("delta", ball), rng.normal(size=ball.size) * 2):
                tr = solve_pme(u0, 1.0, 40, ball, phi)
                drift = max(drift, float(np.max(np.abs(np.diff(tr.masses())))))
                li = tr.linf()
                linf = max(linf, float(np.max(np.diff(li))) / li[0])
    res.add("constant data stationary", stat, 1e-12)
    res.add("mass drift per step", drift, 1e-12)
    # a rounding-level rise relative to ||z_0||_inf still counts as non-increasing
    res.add("max rise of ||z_i||_inf (rel)", linf, 1e-13)
    ball = balls[0]
    phi = Nonlinearity.power(2.0)
    pairs = [(rng.normal(size=ball.size) * rng.uniform(0.1, 5), rng.normal(size=ball.size) * rng.uniform(0.1, 5))
             for _ in range(100)]
    rep = accretivity_probe(pairs, 0.1, ball, phi)
    res.add("L1 resolvent contraction violations (of 100)", rep.violations, 0)
    bad = 0
    for _ in range(100):
        f = rng.normal(size=ball.size)
        g = f + np.abs(rng.normal(size=ball.size)) * (rng.random(ball.size) < 0.5)
        zf = resolvent_solve(f, 0.0, 0.1, ball, phi)
        zg = resolvent_solve(g, 0.0, 0.1, ball, phi)
        bad += int(np.any(zg - zf < -1e-10))
    res.add("comparison principle violations (of 100)", bad, 0)
    err = linear_semigroup_error(initial_data("delta", ball), 1.0, 1000, ball)
    res.add("linear case vs exp(tG), dt=1e-3, T=1 (sup norm)", err, 1e-6)
    for m in (1.0, 2.0, 3.0):
        hs = halving_study(initial_data("delta", ball), 1.0, 20, ball, Nonlinearity.power(m))
        res.add(f"dt-halving error ratio m={m:g}", hs.ratio, 2.3, 1.7 <= hs.ratio <= 2.3)
    return res


def criterion_7(preset="quick", seed=1) -> CriterionResult:
    res = CriterionResult(7, "determinism")
    ball = _pme_ball()
    a = simulate_endpoints(0, 1.0, ball, 20_000, seed, threads=1)
    b = simulate_endpoints(0, 1.0, ball, 20_000, seed, threads=1)
    res.add("same seed, same threads: identical bytes", 0.0 if a.tobytes() == b.tobytes() else 1.0, 0.0)
    diff = 0.0
    for threads in (2, 4):
        c = simulate_endpoints(0, 1.0, ball, 20_000, seed, threads=threads)
        diff = max(diff, float(np.max(np.abs(a - c))))
    res.add("thread-count variation of MC endpoints", diff, 1e-12)
    P = ball.params
    k1 = kernel_csv((0.5, 2.0), range(-3, 4), P, 1e-18)
    k2 = kernel_csv((0.5, 2.0), range(-3, 4), P, 1e-18)
    res.add("kernel table bytes", 0.0 if k1 == k2 else 1.0, 0.0)
    u0 = initial_data("random:3", ball)
    s1 = solution_csv(solve_pme(u0, 0.5, 10, ball, Nonlinearity.power(2)))
    s2 = solution_csv(solve_pme(u0, 0.5, 10, ball, Nonlinearity.power(2)))
    res.add("solver output bytes", 0.0 if s1 == s2 else 1.0, 0.0)
    return res


CRITERIA = (criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7)


def run_all(preset: str = "quick", seed: int = 1, only=None) -> list:
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}")
    out = []
    for i, fn in enumerate(CRITERIA, 1):
        if only and i not in only:
            continue
        start = time.perf_counter()
        kwargs = {"seed": seed} if "seed" in fn.__code__.co_varnames else {}
        r = fn(preset, **kwargs)
        r.seconds = time.perf_counter() - start
        out.append(r)
    return out


def format_table(results) -> str:
    lines = []
    for r in results:
        lines.append(r.line())
        for c in r.checks:
            mark = "ok " if c.passed else "BAD"
            note = f"  [{c.note}]" if c.note else ""
            lines.append(f"    {mark} {c.name}: {c.value:.3e} (limit {c.threshold:.3e}){note}")
    return "\n".join(lines)
