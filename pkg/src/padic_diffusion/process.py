"""Monte Carlo for the ball process and for the full process rebuilt from it.

The cell-projected ball process is a continuous-time Markov chain with
exponential holding times of rate ``R = kappa (lambda_-K - lambda_N)``; a jump
picks a distance level with probability proportional to its rate and then a
uniformly random cell at that distance.  Jumps shorter than the cell size are
invisible and are never drawn, so the simulation has no discretisation error.

Large jumps (norm above ``p^N``) form an independent compound Poisson process;
they are simulated on a larger ball ``B_N'`` and added to the ball process.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .ball import BallConfig, eigenvalue_for_norm, transition_row
from .core import BELOW_RESOLUTION, CellGrid, PAdicPoint
from .errors import ValidationError
from .rng import STREAM_LARGE, STREAM_SMALL, uniforms
from .spectral import KernelParams, a_w, lambda_n

CHUNK = 8192
BOOTSTRAP_REPS = 400
MAX_EVENTS = 10_000_000
ROUNDING = 1e-12


@dataclass(frozen=True)
class JumpRateTable:
    """Rates per grid level ``l`` (distance ``p^(l-K)``) for ``l`` in ``levels``."""

    levels: tuple
    rates: tuple
    q: int

    @classmethod
    def for_levels(cls, params: KernelParams, K: int, j_lo: int, j_hi: int) -> JumpRateTable:
        """Jumps of norm ``p^j`` for ``j_lo < j <= j_hi`` at resolution ``p^-K``."""
        levels, rates = [], []
        for j in range(j_lo + 1, j_hi + 1):
            levels.append(j + K)
            rates.append(params.kappa * params.sphere_factor * float(params.p) ** (params.n * j) / params.w(j))
        return cls(tuple(levels), tuple(rates), params.space.q)

    @classmethod
    def for_ball(cls, ball: BallConfig) -> JumpRateTable:
        return cls.for_levels(ball.params, ball.K, -ball.K, ball.N)

    @property
    def total(self) -> float:
        return math.fsum(self.rates)

    @property
    def cdf(self) -> np.ndarray:
        c = np.cumsum(self.rates) / self.total
        c[-1] = 1.0
        return c


def jump_to_level(cells: np.ndarray, level: np.ndarray, u_offset: np.ndarray, u_fine: np.ndarray,
                  q: int) -> np.ndarray:
    """Uniform cell at block level ``level`` from each cell.

    The target shares the level-``l`` block, differs in the level-``l-1`` sub-block
    (offset uniform on ``1..q-1``) and is uniform inside that sub-block.
    """
    span = q ** level
    sub = q ** (level - 1)
    base = (cells // span) * span
    digit = (cells // sub) % q
    offset = 1 + np.minimum((u_offset * (q - 1)).astype(np.int64), q - 2)
    fine = np.minimum((u_fine * sub).astype(np.int64), sub - 1)
    return base + ((digit + offset) % q) * sub + fine


def sample_displacement(j: int, grid: CellGrid, seed: int, index: int = 0) -> PAdicPoint:
    """Uniform point (cell) at exact distance ``p^j`` from 0."""
    level = j + grid.K
    if not 1 <= level <= grid.L:
        raise ValidationError(f"level j={j} must satisfy {-grid.K} < j <= {grid.N}")
    u = uniforms(seed, STREAM_SMALL, np.array([index]), 0)
    cell = jump_to_level(np.zeros(1, dtype=np.int64), np.array([level]), u[2], u[3], grid.q)
    return grid.point(int(cell[0]))


def sample_displacements(j: int, grid: CellGrid, seed: int, count: int) -> np.ndarray:
    """Cell indices of ``count`` independent uniform displacements at distance ``p^j``."""
    level = j + grid.K
    if not 1 <= level <= grid.L:
        raise ValidationError(f"level j={j} must satisfy {-grid.K} < j <= {grid.N}")
    u = uniforms(seed, STREAM_SMALL, np.arange(count), 0)
    return jump_to_level(np.zeros(count, dtype=np.int64), np.full(count, level), u[2], u[3], grid.q)


@dataclass
class PathBatch:
    final: np.ndarray
    n_events: np.ndarray
    log_path: np.ndarray | None = None
    log_time: np.ndarray | None = None
    log_cell: np.ndarray | None = None


def _run_chunk(x0, T, table: JumpRateTable, seed: int, stream: int, path_ids: np.ndarray,
               record: bool) -> PathBatch:
    m = len(path_ids)
    cells = np.full(m, x0, dtype=np.int64)
    times = np.zeros(m)
    counts = np.zeros(m, dtype=np.int64)
    active = np.ones(m, dtype=bool)
    R = table.total
    levels = np.asarray(table.levels, dtype=np.int64)
    cdf = table.cdf if R > 0 else None
    logs = []
    if R <= 0:
        active[:] = False
    event = 0
    while active.any():
        if event > MAX_EVENTS:
            raise ValidationError("event budget exceeded; reduce the horizon or the jump rates")
        idx = np.nonzero(active)[0]
        u = uniforms(seed, stream, path_ids[idx], event)
        times[idx] += -np.log(u[0]) / R
        done = times[idx] > T
        active[idx[done]] = False
        go = idx[~done]
        if len(go):
            lev = levels[np.searchsorted(cdf, u[1][~done], side="right").clip(max=len(levels) - 1)]
            cells[go] = jump_to_level(cells[go], lev, u[2][~done], u[3][~done], table.q)
            counts[go] += 1
            if record:
                logs.append((path_ids[go], times[go].copy(), cells[go].copy()))
        event += 1
    batch = PathBatch(cells, counts)
    if record:
        if logs:
            batch.log_path = np.concatenate([l[0] for l in logs])
            batch.log_time = np.concatenate([l[1] for l in logs])
            batch.log_cell = np.concatenate([l[2] for l in logs])
            order = np.lexsort((batch.log_time, batch.log_path))
            batch.log_path, batch.log_time, batch.log_cell = (
                batch.log_path[order], batch.log_time[order], batch.log_cell[order])
        else:
            batch.log_path = np.zeros(0, dtype=np.uint64)
            batch.log_time = np.zeros(0)
            batch.log_cell = np.zeros(0, dtype=np.int64)
    return batch


def resolve_threads(threads: int | None) -> int:
    if threads is None or threads <= 0:
        return os.cpu_count() or 1
    return threads


def run_paths(x0: int, T: float, table: JumpRateTable, paths: int, seed: int, stream: int = STREAM_SMALL,
              threads: int | None = 1, record: bool = False, first_path: int = 0) -> PathBatch:
    """Simulate ``paths`` independent chains up to ``T``.

    Paths are cut into fixed chunks; the result does not depend on ``threads``.
    """
    if not T > 0:
        raise ValidationError(f"horizon must be positive, got T={T}")
    if paths < 1:
        raise ValidationError(f"paths must be >= 1, got {paths}")
    ids = np.arange(first_path, first_path + paths, dtype=np.uint64)
    chunks = [ids[i:i + CHUNK] for i in range(0, paths, CHUNK)]
    threads = resolve_threads(threads)
    if threads == 1 or len(chunks) == 1:
        parts = [_run_chunk(x0, T, table, seed, stream, c, record) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda c: _run_chunk(x0, T, table, seed, stream, c, record), chunks))
    out = PathBatch(np.concatenate([b.final for b in parts]), np.concatenate([b.n_events for b in parts]))
    if record:
        out.log_path = np.concatenate([b.log_path for b in parts])
        out.log_time = np.concatenate([b.log_time for b in parts])
        out.log_cell = np.concatenate([b.log_cell for b in parts])
    return out


@dataclass
class PathSample:
    seed: int
    path: int
    start: int
    horizon: float
    times: np.ndarray
    cells: np.ndarray


def simulate_path(x0: int, T: float, ball: BallConfig, seed: int, path: int = 0) -> PathSample:
    table = JumpRateTable.for_ball(ball)
    b = run_paths(x0, T, table, 1, seed, record=True, first_path=path)
    return PathSample(seed, path, x0, T, b.log_time, b.log_cell)


def simulate_endpoints(x0: int, t: float, ball: BallConfig, paths: int, seed: int,
                       threads: int | None = 1) -> np.ndarray:
    if not 0 <= x0 < ball.size:
        raise ValidationError(f"start cell {x0} outside [0, {ball.size})")
    return run_paths(x0, t, JumpRateTable.for_ball(ball), paths, seed, threads=threads).final


@dataclass
class EmpiricalDensity:
    counts: np.ndarray
    paths: int

    @property
    def probs(self) -> np.ndarray:
        return self.counts / self.paths

    def stderr(self, analytic: np.ndarray) -> np.ndarray:
        return np.sqrt(analytic * (1 - analytic) / self.paths)


def tv_distance(a: np.ndarray, b: np.ndarray) -> float:
    return 0.5 * float(np.abs(a - b).sum())


@dataclass
class TransitionReport:
    t: float
    paths: int
    density: EmpiricalDensity
    analytic: np.ndarray
    zscores: np.ndarray
    tv: float
    tv_mean: float
    tv_sd: float

    @property
    def envelope(self) -> float:
        return self.tv_mean + 3 * self.tv_sd

    @property
    def sigma(self) -> float:
        """Observed TV in units of the bootstrap spread above its mean."""
        return (self.tv - self.tv_mean) / self.tv_sd if self.tv_sd > 0 else 0.0

    @property
    def passed(self) -> bool:
        return self.tv <= self.envelope


def tv_envelope(analytic: np.ndarray, paths: int, seed: int, reps: int = BOOTSTRAP_REPS):
    """Mean and sd of the TV distance between a multinomial sample and its law."""
    rng = np.random.default_rng(seed)
    prob = np.clip(analytic, 0, None)
    prob = prob / prob.sum()
    tvs = [tv_distance(rng.multinomial(paths, prob) / paths, prob) for _ in range(reps)]
    return float(np.mean(tvs)), float(np.std(tvs, ddof=1))


def mc_transition_check(x0: int, t: float, paths: int, ball: BallConfig, seed: int,
                        threads: int | None = 1) -> TransitionReport:
    ends = simulate_endpoints(x0, t, ball, paths, seed, threads)
    counts = np.bincount(ends, minlength=ball.size)
    dens = EmpiricalDensity(counts, paths)
    analytic = transition_row(t, ball, x0)
    se = dens.stderr(analytic)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, (dens.probs - analytic) / se, 0.0)
    mean, sd = tv_envelope(analytic, paths, seed)
    return TransitionReport(t, paths, dens, analytic, z, tv_distance(dens.probs, analytic), mean, sd)


# -- characteristic functions ------------------------------------------------------


def dual_point(grid: CellGrid, coords) -> PAdicPoint:
    """Frequency ``z`` resolvable against the cells of ``grid``: ``||z|| <= p^K``, precision ``p^-N``."""
    return PAdicPoint.from_integers(grid.config, grid.K, grid.N, coords)


def ball_character_value(z: PAdicPoint, t: float, ball: BallConfig) -> float:
    """``E chi(z . eta_t)`` from the ball spectrum."""
    e = z.norm_exponent()
    if e is BELOW_RESOLUTION:
        return 1.0
    return math.exp(eigenvalue_for_norm(e, ball) * t)


def _z(diff: float, stderr: float) -> float:
    if abs(diff) <= ROUNDING:
        return 0.0
    return abs(diff) / stderr if stderr > 0 else math.inf


@dataclass
class CharacterReport:
    mean: complex
    stderr_re: float
    stderr_im: float
    analytic: float
    paths: int

    @property
    def zscore(self) -> float:
        return max(_z(self.mean.real - self.analytic, self.stderr_re), _z(self.mean.imag, self.stderr_im))

    @property
    def passed(self) -> bool:
        return self.zscore <= 3.0


def _character_report(chars: np.ndarray, analytic: float) -> CharacterReport:
    P = len(chars)
    return CharacterReport(complex(chars.mean()), float(chars.real.std(ddof=1) / math.sqrt(P)),
                           float(chars.imag.std(ddof=1) / math.sqrt(P)), analytic, P)


def mc_character(z: PAdicPoint, t: float, paths: int, ball: BallConfig, seed: int, x0: int = 0,
                 threads: int | None = 1) -> CharacterReport:
    """Sample mean of ``chi(z . eta_t)`` started from the origin cell."""
    if x0 != 0:
        raise ValidationError("characters are evaluated for paths started at the origin")
    ends = simulate_endpoints(0, t, ball, paths, seed, threads)
    chars = ball.grid.characters(z, ends)
    return _character_report(chars, ball_character_value(z, t, ball))


@dataclass
class LargeJumps:
    grid: CellGrid
    table: JumpRateTable
    displacement: np.ndarray
    n_jumps: np.ndarray
    truncated_rate: float


def simulate_large_jumps(T: float, ball: BallConfig, N_cap: int, paths: int, seed: int,
                         threads: int | None = 1) -> LargeJumps:
    """Compound Poisson of jumps with norm in ``(p^N, p^N_cap]``, observed on cells of ``B_N_cap``."""
    if N_cap <= ball.N:
        raise ValidationError(f"cap N'={N_cap} must exceed N={ball.N}")
    P = ball.params
    grid = CellGrid(P.space, N_cap, ball.K)
    table = JumpRateTable.for_levels(P, ball.K, ball.N, N_cap)
    b = run_paths(0, T, table, paths, seed, stream=STREAM_LARGE, threads=threads)
    return LargeJumps(grid, table, b.final, b.n_events, P.kappa * lambda_n(N_cap, P))


def embed_cells(cells: np.ndarray, ball: BallConfig, big: CellGrid) -> np.ndarray:
    """Same points, re-indexed on the cells of a larger ball with the same resolution."""
    A = ball.grid.coords(cells)
    shift = ball.params.p ** (big.N - ball.N)
    return big.from_coords(A * shift)


def large_jump_character_value(z_exp, t: float, ball: BallConfig, N_cap: int) -> float:
    """``E chi(z . xi^(N))`` for the large jumps truncated at ``p^N_cap``."""
    if z_exp is BELOW_RESOLUTION:
        return 1.0
    P = ball.params
    q = P.space.q
    total = []
    for j in range(ball.N + 1, N_cap + 1):
        rate = P.kappa * P.sphere_factor * float(P.p) ** (P.n * j) / P.w(j)
        e = z_exp + j
        mean_char = 1.0 if e <= 0 else (-1.0 / (q - 1) if e == 1 else 0.0)
        total.append(rate * (1.0 - mean_char))
    return math.exp(-t * math.fsum(total))


def full_character_value(z_exp, t: float, params: KernelParams) -> float:
    """``E chi(z . xi_t) = exp(-kappa t A_w(z))``."""
    if z_exp is BELOW_RESOLUTION:
        return 1.0
    return math.exp(-params.kappa * t * a_w(-z_exp, params))


@dataclass
class FullProcessReport:
    report: CharacterReport
    truncation: float
    ball_factor: float
    large_factor: float


def mc_full_character(z_coords, t: float, paths: int, ball: BallConfig, N_cap: int, seed: int,
                      threads: int | None = 1) -> FullProcessReport:
    """``chi(z . xi_t)`` for ``xi_t = eta_t + xi_t^(N)`` against ``exp(-kappa t A_w(z))``.

    ``truncation`` is ``kappa t lambda_N'``, the log of the bias from capping large jumps.
    """
    ends = simulate_endpoints(0, t, ball, paths, seed, threads)
    big = simulate_large_jumps(t, ball, N_cap, paths, seed, threads)
    xi = big.grid.add_cells(embed_cells(ends, ball, big.grid), big.displacement)
    z = dual_point(big.grid, z_coords)
    chars = big.grid.characters(z, xi)
    e = z.norm_exponent()
    rep = _character_report(chars, full_character_value(e, t, ball.params))
    return FullProcessReport(rep, ball.params.kappa * t * lambda_n(N_cap, ball.params),
                             ball_character_value(z, t, ball) if e is BELOW_RESOLUTION or e <= ball.K else math.nan,
                             large_jump_character_value(e, t, ball, N_cap))
