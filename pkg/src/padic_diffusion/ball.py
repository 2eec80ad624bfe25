"""Dynamics restricted to the ball ``B_N``: kernel ``Z_N``, generator on cells, transition matrices.

Removing every jump longer than ``p^N`` leaves a process that never leaves
``B_N``.  On functions constant on cells of radius ``p^-K`` its generator is
exactly the finite matrix

    G[a, b] = kappa * p^(-nK) / w(||x_a - x_b||)     (a != b)

because jumps of norm ``<= p^-K`` do not move a point out of its cell.  The
rates depend on the pair only through the block level ``l(a, b)``, so every
operator here is a combination of the block-averaging projections ``Pi_l``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

import numpy as np
import scipy.linalg

from .core import CellGrid, haar_sphere
from .errors import BudgetExceeded, MethodDisagreement, ValidationError
from .heat import z_center_defect, z_center_mass, z_full, z_symbol_moment
from .spectral import DEFAULT_TOL, KernelParams, a_w, lambda_exact, lambda_n

DEFAULT_BUDGET = 65536
DENSE_LIMIT = 4096
CROSS_CHECK_TOL = 1e-9
# above this kappa*lambda_N*t the factor e^(kappa lambda_N t) would amplify rounding
AMPLIFY_LIMIT = 1.0


@dataclass(frozen=True)
class BallConfig:
    params: KernelParams
    N: int
    K: int
    budget: int = DEFAULT_BUDGET

    def __post_init__(self):
        if self.N + self.K < 1:
            raise ValidationError(f"resolution_K: need K >= -N+1, got N={self.N}, K={self.K}")
        if self.size > self.budget:
            raise BudgetExceeded(
                f"ball with p^(n(N+K)) = {self.size} states exceeds the budget of {self.budget}")

    @property
    def size(self) -> int:
        return self.params.space.q ** (self.N + self.K)

    @property
    def L(self) -> int:
        return self.N + self.K

    @cached_property
    def grid(self) -> CellGrid:
        return CellGrid(self.params.space, self.N, self.K)

    @property
    def cell_measure(self) -> float:
        return float(self.params.p) ** (-self.params.n * self.K)

    @property
    def lam(self) -> float:
        return lambda_n(self.N, self.params)


def _check_t0(t):
    if not t >= 0:
        raise ValidationError(f"time must be non-negative, got t={t}")


def c_t(t: float, ball: BallConfig, tol: float = DEFAULT_TOL) -> float:
    """Spatially constant correction ``c(t)`` in ``Z_N = e^(kappa lambda_N t) Z + c(t)``."""
    _check_t0(t)
    if t == 0:
        return 0.0
    P = ball.params
    kl = P.kappa * ball.lam * t
    # p^-nN (1 - e^{kl} mass) with mass = 1 - defect, arranged without cancellation
    defect = z_center_defect(t, ball.N, P, tol)
    scale = float(P.p) ** (-P.n * ball.N)
    return scale * (-math.expm1(kl) + math.exp(kl) * defect)


def c_prime(t: float, ball: BallConfig, tol: float = DEFAULT_TOL) -> float:
    """``c'(t) = kappa e^(kappa lambda_N t) int_{B_-N} e^(-kappa t A_w) (A_w - lambda_N)``."""
    _check_t0(t)
    P = ball.params
    lam = ball.lam
    moment = z_symbol_moment(t, ball.N, P, tol)
    mass = 1.0 if t == 0 else z_center_mass(t, ball.N, P, tol)
    scale = float(P.p) ** (-P.n * ball.N)
    return scale * P.kappa * math.exp(P.kappa * lam * t) * math.fsum([moment, -lam * mass])


def _ball_symbol(k: int, ball: BallConfig, tol: float) -> float:
    """``A_w - lambda_N`` at frequency norm ``p^k``; zero on ``||xi|| <= p^-N``."""
    if k <= -ball.N:
        return 0.0
    return a_w(-k, ball.params, tol) - ball.lam


def _z_ball_characters(t: float, beta: int, ball: BallConfig, tol: float) -> float:
    """``Z_N(t, x)`` for ``x != 0`` as a finite radial character sum.

    Same value as ``e^(kappa lambda_N t) Z + c(t)`` with the exponential factor
    cancelled analytically; the symbol is ``exp(-kappa t (A_w - lambda_N))``
    outside ``B_-N`` and 1 inside it.
    """
    P = ball.params
    pf, n, kt = float(P.p), P.n, P.kappa * t
    sphere = 1.0 - pf ** (-n)
    if kt * a_w(beta - 1, P, tol) > 1.0:
        # near the origin: sum outward from the large frequencies
        terms = [pf ** (-n * ball.N)]
        terms += [sphere * pf ** (n * k) * math.exp(-kt * _ball_symbol(k, ball, tol))
                  for k in range(-ball.N + 1, -beta + 1)]
        terms.append(-pf ** (-n * beta) * math.exp(-kt * _ball_symbol(1 - beta, ball, tol)))
        return math.fsum(terms)

    def h(k):
        return math.expm1(-kt * _ball_symbol(k, ball, tol))

    terms = [sphere * pf ** (-n * j) * h(-(beta + j)) for j in range(0, ball.N - beta)]
    return pf ** (-n * beta) * (math.fsum(terms) - h(1 - beta))


def z_ball(t: float, beta: int, ball: BallConfig, tol: float = DEFAULT_TOL) -> float:
    """``Z_N(t, x)`` at ``||x|| = p^beta <= p^N``."""
    if beta > ball.N:
        raise ValidationError(f"beta={beta} lies outside the ball B_{ball.N}")
    P = ball.params
    if P.kappa * ball.lam * t > AMPLIFY_LIMIT:
        return _z_ball_characters(t, beta, ball, tol)
    return math.exp(P.kappa * ball.lam * t) * z_full(t, beta, P, tol) + c_t(t, ball, tol)


def z_ball_cell_mass(t: float, ball: BallConfig, tol: float = DEFAULT_TOL) -> float:
    """``int_{B_-K} Z_N(t, x) dx``: probability of staying in the starting cell."""
    if t == 0:
        return 1.0
    P = ball.params
    kl = P.kappa * ball.lam * t
    if kl > AMPLIFY_LIMIT:
        pf, n = float(P.p), P.n
        terms = [pf ** (-n * ball.N)]
        terms += [(1.0 - pf ** (-n)) * pf ** (n * k) * math.exp(-P.kappa * t * _ball_symbol(k, ball, tol))
                  for k in range(-ball.N + 1, ball.K + 1)]
        return ball.cell_measure * math.fsum(terms)
    return math.exp(kl) * z_center_mass(t, -ball.K, P, tol) + c_t(t, ball, tol) * ball.cell_measure


def z_ball_total_mass(t: float, ball: BallConfig, tol: float = DEFAULT_TOL) -> float:
    """``int_{B_N} Z_N(t, x) dx`` summed sphere by sphere (equals 1)."""
    cfg = ball.params.space
    terms = [z_ball_cell_mass(t, ball, tol)]
    for beta in range(-ball.K + 1, ball.N + 1):
        terms.append(z_ball(t, beta, ball, tol) * float(haar_sphere(beta, cfg)))
    return math.fsum(terms)


# -- generator ------------------------------------------------------------------


@dataclass(frozen=True)
class GeneratorMatrix:
    """Jump generator on the cells of ``B_N``, stored by block level.

    ``entries[l-1]`` is the rate between two cells whose smallest common block
    has level ``l`` (distance ``p^(l-K)``), for ``l = 1..L``.
    """

    ball: BallConfig
    entries: tuple
    exact: tuple | None

    @property
    def L(self) -> int:
        return self.ball.L

    @property
    def q(self) -> int:
        return self.ball.params.space.q

    @property
    def size(self) -> int:
        return self.ball.size

    def level_rates(self) -> np.ndarray:
        """Total rate ``r_j`` into the sphere of radius ``p^j``, ``j = -K+1..N``."""
        q = self.q
        return np.array([e * (q - 1) * q ** (ell - 1) for ell, e in enumerate(self.entries, 1)])

    def row_sum(self) -> float:
        return math.fsum(self.level_rates())

    def row_sum_exact(self) -> Fraction | None:
        if self.exact is None:
            return None
        q = self.q
        return sum((e * (q - 1) * q ** (ell - 1) for ell, e in enumerate(self.exact, 1)), Fraction(0))

    @cached_property
    def pyramid_weights(self) -> np.ndarray:
        """``omega_l = q^l (e_l - e_(l+1))`` with ``e_(L+1) = 0``."""
        e = list(self.entries) + [0.0]
        return np.array([self.q ** ell * (e[ell - 1] - e[ell]) for ell in range(1, self.L + 1)])

    def dense(self) -> np.ndarray:
        if self.size > DENSE_LIMIT:
            raise BudgetExceeded(f"dense matrix with {self.size} states exceeds {DENSE_LIMIT}")
        levels = self.ball.grid.level_matrix()
        table = np.concatenate([[-self.row_sum()], np.asarray(self.entries, dtype=float)])
        return table[levels]

    def matvec(self, u) -> np.ndarray:
        return apply_generator(self, u)


def assemble_generator(ball: BallConfig) -> GeneratorMatrix:
    P = ball.params
    p, n, K = P.p, P.n, ball.K
    entries = []
    exact = []
    for ell in range(1, ball.L + 1):
        j = ell - K
        entries.append(P.kappa * float(p) ** (-n * K) / P.w(j))
        w_exact = P.weight.exact_value(j, p)
        if exact is not None and w_exact is not None and float(P.kappa).is_integer():
            exact.append(Fraction(int(P.kappa)) * Fraction(p) ** (-n * K) / w_exact)
        else:
            exact = None
    return GeneratorMatrix(ball, tuple(entries), tuple(exact) if exact is not None else None)


def _as_grid_values(u) -> np.ndarray:
    # real unless given complex (characters), never silently dropping an imaginary part
    u = np.asarray(u)
    return u.astype(complex if np.iscomplexobj(u) else float, copy=False)


def block_averages(u: np.ndarray, q: int, L: int) -> list:
    """``[avg_0 u, avg_1 u, ..., avg_L u]``, each broadcast back to full length."""
    u = _as_grid_values(u)
    out = [u]
    cur = u
    for ell in range(1, L + 1):
        cur = cur.reshape(-1, q).mean(axis=1)
        out.append(np.repeat(cur, q ** ell))
    return out


def apply_generator(G: GeneratorMatrix, u) -> np.ndarray:
    """``G u`` in ``O(M L)`` via ``sum_l omega_l (avg_l u - u)``."""
    u = _as_grid_values(u)
    if u.shape[0] != G.size:
        raise ValidationError(f"grid function has {u.shape[0]} values, expected {G.size}")
    if u.ndim == 2:
        return np.column_stack([apply_generator(G, u[:, k]) for k in range(u.shape[1])])
    out = np.zeros_like(u)
    avgs = block_averages(u, G.q, G.L)
    for ell in range(G.L, 0, -1):
        out += G.pyramid_weights[ell - 1] * (avgs[ell] - u)
    return out


# -- spectral structure -----------------------------------------------------------


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenvalues of ``G`` per level ``j = 0..L`` with multiplicities.

    Level ``j < L`` holds the characters of norm ``p^(K-j)``; level ``L`` is the
    constant mode.
    """

    ball: BallConfig
    eigenvalues: tuple
    multiplicities: tuple

    def sorted_spectrum(self) -> np.ndarray:
        vals = np.repeat(np.asarray(self.eigenvalues, dtype=float), self.multiplicities)
        return np.sort(vals)

    @property
    def gap(self) -> float:
        return -max(self.eigenvalues[:-1]) if len(self.eigenvalues) > 1 else math.inf


def spectral_decomposition(ball: BallConfig) -> SpectralDecomposition:
    P = ball.params
    q = P.space.q
    lam = ball.lam
    eig = []
    mult = []
    for j in range(ball.L):
        gamma = j - ball.K
        eig.append(P.kappa * (lam - a_w(gamma, P)))
        mult.append((q - 1) * q ** (ball.L - j - 1))
    eig.append(0.0)
    mult.append(1)
    return SpectralDecomposition(ball, tuple(eig), tuple(mult))


def eigenvalue_for_norm(k: int, ball: BallConfig) -> float:
    """``kappa (lambda_N - A_w(z))`` for ``||z|| = p^k``, or 0 for ``||z|| <= p^-N``."""
    if k <= -ball.N:
        return 0.0
    return ball.params.kappa * (ball.lam - a_w(-k, ball.params))


def _level_values(t: float, ball: BallConfig, decomp: SpectralDecomposition | None = None) -> np.ndarray:
    """Transition probability to one cell at block level ``l``, ``l = 0..L``."""
    decomp = decomp or spectral_decomposition(ball)
    q, L = ball.params.space.q, ball.L
    c = [math.exp(mu * t) for mu in decomp.eigenvalues]
    vals = []
    for ell in range(L + 1):
        terms = [c[L] * float(q) ** (-L)]
        for j in range(ell, L):
            terms.append(c[j] * float(q) ** (-j) * (1.0 - 1.0 / q))
        if ell >= 1:
            terms.append(-c[ell - 1] * float(q) ** (-ell))
        vals.append(math.fsum(terms))
    return np.array(vals)


def transition_matrix(t: float, ball: BallConfig, method: str = "spectral") -> np.ndarray:
    """``exp(t G)`` as a dense stochastic matrix."""
    _check_t0(t)
    if ball.size > DENSE_LIMIT:
        raise BudgetExceeded(f"dense transition matrix with {ball.size} states exceeds {DENSE_LIMIT}")
    if method == "spectral":
        return _level_values(t, ball)[ball.grid.level_matrix()]
    if method == "squaring":
        return scipy.linalg.expm(t * assemble_generator(ball).dense())
    raise ValidationError(f"unknown method {method!r}; use 'spectral' or 'squaring'")


def transition_row(t: float, ball: BallConfig, start: int = 0) -> np.ndarray:
    """Row ``start`` of ``exp(t G)`` without forming the matrix."""
    _check_t0(t)
    vals = _level_values(t, ball)
    idx = np.arange(ball.size, dtype=np.int64)
    return vals[ball.grid.levels(idx, start)]


def apply_transition(t: float, ball: BallConfig, u) -> np.ndarray:
    """``exp(t G) u`` through the block-average pyramid."""
    _check_t0(t)
    u = _as_grid_values(u)
    decomp = spectral_decomposition(ball)
    avgs = block_averages(u, ball.params.space.q, ball.L)
    out = np.exp(decomp.eigenvalues[ball.L] * t) * avgs[ball.L]
    for j in range(ball.L):
        out = out + math.exp(decomp.eigenvalues[j] * t) * (avgs[j] - avgs[j + 1])
    return out


def series_level_values(t: float, ball: BallConfig, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Same as the transition level values, but from the ``Z_N`` series."""
    if t == 0:
        return np.array([1.0] + [0.0] * ball.L)
    vals = [z_ball_cell_mass(t, ball, tol)]
    for ell in range(1, ball.L + 1):
        vals.append(ball.cell_measure * z_ball(t, ell - ball.K, ball, tol))
    return np.array(vals)


def series_transition_matrix(t: float, ball: BallConfig, tol: float = DEFAULT_TOL) -> np.ndarray:
    if ball.size > DENSE_LIMIT:
        raise BudgetExceeded(f"dense transition matrix with {ball.size} states exceeds {DENSE_LIMIT}")
    return series_level_values(t, ball, tol)[ball.grid.level_matrix()]


@dataclass
class CrossCheck:
    t: float
    spectral_vs_squaring: float
    spectral_vs_series: float
    row_sum_error: float
    min_entry: float


def cross_check(t: float, ball: BallConfig, tol: float = CROSS_CHECK_TOL,
                series_tol: float = 1e-8) -> CrossCheck:
    """Compare the three constructions of the transition matrix; raise on disagreement."""
    spec = transition_matrix(t, ball, "spectral")
    sq = transition_matrix(t, ball, "squaring")
    ser = series_transition_matrix(t, ball)
    report = CrossCheck(
        t=t,
        spectral_vs_squaring=float(np.max(np.abs(spec - sq))),
        spectral_vs_series=float(np.max(np.abs(spec - ser))),
        row_sum_error=float(np.max(np.abs(spec.sum(axis=1) - 1.0))),
        min_entry=float(spec.min()),
    )
    if report.spectral_vs_squaring > tol:
        raise MethodDisagreement(
            f"t={t}: spectral and squaring transition matrices differ by {report.spectral_vs_squaring:.3g}")
    if report.spectral_vs_series > series_tol:
        raise MethodDisagreement(
            f"t={t}: transition matrix and Z_N series differ by {report.spectral_vs_series:.3g}")
    return report


def restriction_constant(u, grid: CellGrid, N: int, params: KernelParams) -> float:
    """``R_N = kappa int_{||y|| > p^N} u(y) / w(||y||) dy`` for ``u`` given on the cells of a larger ball."""
    u = np.asarray(u, dtype=float)
    if u.shape != (grid.size,):
        raise ValidationError(f"grid function has shape {u.shape}, expected ({grid.size},)")
    if N < -grid.K + 1:
        raise ValidationError(f"inner radius p^{N} must exceed the cell radius p^{-grid.K}")
    levels = grid.norm_levels()
    norms = levels - grid.K
    mask = norms > N
    weights = np.array([1.0 / params.w(int(j)) for j in norms[mask]])
    cell = float(params.p) ** (-params.n * grid.K)
    return params.kappa * cell * math.fsum(u[mask] * weights)


def lambda_difference_exact(N: int, N2: int, params: KernelParams) -> Fraction | None:
    a, b = lambda_exact(N, params), lambda_exact(N2, params)
    if a is None or b is None:
        return None
    if not float(params.kappa).is_integer():
        return None
    return int(params.kappa) * (a - b)
