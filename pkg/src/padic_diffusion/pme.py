"""Implicit Euler for ``u_t + A phi(u) = 0`` on the ball, ``A = -G``.

Each step solves the nonlinear resolvent equation

    z + (eps + dt A) phi(z) = f

for ``z``.  With ``v = phi(z)`` this is ``beta(v) + eps v + dt A v = f`` where
``beta = phi^-1``; Newton is run on the ``z`` form, whose Jacobian
``I + (eps + dt A) diag(phi'(z))`` stays bounded where ``beta'`` blows up.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla

from .ball import BallConfig, GeneratorMatrix, apply_generator, apply_transition, assemble_generator
from .errors import NumericalFailure, ValidationError

DENSE_SOLVE_LIMIT = 1024


# -- nonlinearities -------------------------------------------------------------------


@dataclass(frozen=True)
class Nonlinearity:
    """Strictly increasing ``phi`` with ``phi(0) = 0``.

    Either the power law ``C sign(s) |s|^m`` or a table of ``(s, phi(s))`` knots
    interpolated linearly and extended by the end slopes.
    """

    m: float = 2.0
    C: float = 1.0
    knots: tuple = ()

    def __post_init__(self):
        if self.knots:
            s = np.array([k[0] for k in self.knots], dtype=float)
            v = np.array([k[1] for k in self.knots], dtype=float)
            if np.any(np.diff(s) <= 0) or np.any(np.diff(v) <= 0):
                raise ValidationError("phi table must be strictly increasing in s and phi(s)")
            if not (s[0] < 0 < s[-1]) and not (0.0 in s):
                raise ValidationError("phi table must bracket s = 0")
            if abs(float(np.interp(0.0, s, v))) > 1e-14:
                raise ValidationError("phi table must satisfy phi(0) = 0")
        else:
            if not self.m >= 1:
                raise ValidationError(f"phi_m must be >= 1, got {self.m}")
            if not self.C > 0:
                raise ValidationError(f"phi_C must be positive, got {self.C}")

    @classmethod
    def power(cls, m: float = 2.0, C: float = 1.0) -> Nonlinearity:
        return cls(m=m, C=C)

    @classmethod
    def linear(cls) -> Nonlinearity:
        return cls(m=1.0, C=1.0)

    @classmethod
    def from_table(cls, pairs, m: float = 1.0, C: float = 1.0) -> Nonlinearity:
        return cls(m=m, C=C, knots=tuple((float(a), float(b)) for a, b in sorted(pairs)))

    @property
    def is_linear(self) -> bool:
        return not self.knots and self.m == 1.0

    def _table(self):
        s = np.array([k[0] for k in self.knots])
        v = np.array([k[1] for k in self.knots])
        return s, v

    def __call__(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self.knots:
            ks, kv = self._table()
            out = np.interp(s, ks, kv)
            lo = (kv[1] - kv[0]) / (ks[1] - ks[0])
            hi = (kv[-1] - kv[-2]) / (ks[-1] - ks[-2])
            out = np.where(s < ks[0], kv[0] + lo * (s - ks[0]), out)
            return np.where(s > ks[-1], kv[-1] + hi * (s - ks[-1]), out)
        if self.m == 1.0:
            return self.C * s
        return self.C * np.sign(s) * np.abs(s) ** self.m

    def derivative(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self.knots:
            ks, kv = self._table()
            slopes = np.diff(kv) / np.diff(ks)
            i = np.clip(np.searchsorted(ks, s, side="right") - 1, 0, len(slopes) - 1)
            return slopes[i]
        if self.m == 1.0:
            return np.full_like(s, self.C)
        return self.C * self.m * np.abs(s) ** (self.m - 1)

    def inverse(self, v) -> np.ndarray:
        """``beta = phi^-1``."""
        v = np.asarray(v, dtype=float)
        if self.knots:
            ks, kv = self._table()
            out = np.interp(v, kv, ks)
            lo = (ks[1] - ks[0]) / (kv[1] - kv[0])
            hi = (ks[-1] - ks[-2]) / (kv[-1] - kv[-2])
            out = np.where(v < kv[0], ks[0] + lo * (v - kv[0]), out)
            return np.where(v > kv[-1], ks[-1] + hi * (v - kv[-1]), out)
        return np.sign(v) * (np.abs(v) / self.C) ** (1.0 / self.m)

    def check_growth(self, samples) -> float:
        """Largest ``|phi(s)| / (C |s|^m)`` over nonzero samples."""
        s = np.asarray(samples, dtype=float)
        s = s[s != 0]
        return float(np.max(np.abs(self(s)) / (self.C * np.abs(s) ** self.m))) if len(s) else 0.0


# -- solver -------------------------------------------------------------------------------


@dataclass(frozen=True)
class SolverConfig:
    dt: float = 0.01
    steps: int = 100
    tol: float = 1e-14
    max_newton: int = 60
    eps_schedule: tuple = (1e-2, 1e-4, 1e-6, 0.0)
    jacobi_sweeps: int = 20000
    gmres_tol: float = 1e-15

    def __post_init__(self):
        if not self.dt > 0:
            raise ValidationError(f"dt must be positive, got {self.dt}")
        if self.steps < 1:
            raise ValidationError(f"steps must be >= 1, got {self.steps}")
        if not (self.tol > 0 and self.max_newton >= 1):
            raise ValidationError("solver tolerance and Newton cap must be positive")
        sched = list(self.eps_schedule)
        if any(b >= a for a, b in zip(sched, sched[1:])) or any(e < 0 for e in sched):
            raise ValidationError("eps schedule must be strictly decreasing and non-negative")


class _Operator:
    """``A = -G`` with a cached dense copy for small grids."""

    def __init__(self, G: GeneratorMatrix):
        self.G = G
        self.size = G.size
        self.dense = -G.dense() if G.size <= DENSE_SOLVE_LIMIT else None

    def __call__(self, v: np.ndarray) -> np.ndarray:
        if self.dense is not None:
            return self.dense @ v
        return -apply_generator(self.G, v)

    @property
    def diagonal(self) -> float:
        return self.G.row_sum()


def _residual(z, f, eps, dt, op, phi):
    v = phi(z)
    return z + eps * v + dt * op(v) - f


def _target(f, z, eps, dt, op: _Operator, phi: Nonlinearity, tol: float) -> float:
    # rounding in z + (eps + dt A) phi(z) scales with its largest term; |A v| <= 2 diag |v|
    v = float(np.max(np.abs(phi(z))))
    return tol * max(1.0, float(np.max(np.abs(f))), (eps + 2 * dt * op.diagonal) * v)


def _newton(f, z0, eps, dt, op: _Operator, phi: Nonlinearity, cfg: SolverConfig):
    z = z0.copy()
    F = _residual(z, f, eps, dt, op, phi)
    norm = float(np.max(np.abs(F)))
    for it in range(cfg.max_newton):
        target = _target(f, z, eps, dt, op, phi, cfg.tol)
        if norm <= target:
            return z, norm, it, True
        d = phi.derivative(z)
        if op.dense is not None:
            J = op.dense * (dt * d)[None, :]
            J[np.diag_indices_from(J)] += 1.0 + eps * d
            step = scipy.linalg.solve(J, -F)
        else:
            lin = spla.LinearOperator((op.size, op.size), dtype=float,
                                      matvec=lambda x: x + eps * d * x + dt * op(d * x))
            step, info = spla.gmres(lin, -F, rtol=cfg.gmres_tol, atol=0.0, restart=60, maxiter=50)
        lam = 1.0
        while lam > 1e-6:
            trial = z + lam * step
            Ft = _residual(trial, f, eps, dt, op, phi)
            nt = float(np.max(np.abs(Ft)))
            if nt < norm or nt <= target:
                break
            lam *= 0.5
        else:
            return z, norm, it, False
        z, F, norm = trial, Ft, nt
    return z, norm, cfg.max_newton, norm <= _target(f, z, eps, dt, op, phi, cfg.tol)


def _scalar_solve(g, c, phi: Nonlinearity, lo, hi):
    """Solve ``z + c phi(z) = g`` per entry by bracketed bisection."""
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        val = mid + c * phi(mid) - g
        lo = np.where(val < 0, mid, lo)
        hi = np.where(val < 0, hi, mid)
        if np.all(hi - lo <= 1e-16 * np.maximum(1.0, np.abs(mid))):
            break
    return 0.5 * (lo + hi)


def _jacobi(f, z0, eps, dt, op: _Operator, phi: Nonlinearity, cfg: SolverConfig):
    """Nonlinear Jacobi: each cell solves its own monotone scalar equation."""
    diag = op.diagonal
    z = z0.copy()
    bound = float(np.max(np.abs(f))) + 1.0
    norm = math.inf
    for sweep in range(cfg.jacobi_sweeps):
        v = phi(z)
        # off-diagonal part of A phi(z), which is -(G + diag) phi(z) with sign flipped
        off = op(v) - diag * v
        g = f - dt * off
        z = _scalar_solve(g, eps + dt * diag, phi, np.full_like(z, -bound), np.full_like(z, bound))
        norm = float(np.max(np.abs(_residual(z, f, eps, dt, op, phi))))
        if norm <= _target(f, z, eps, dt, op, phi, cfg.tol):
            return z, norm, sweep + 1, True
    return z, norm, cfg.jacobi_sweeps, False


@dataclass
class SolveInfo:
    residual: float
    iterations: int
    method: str


def resolvent_solve(f, eps: float, dt: float, ball: BallConfig, phi: Nonlinearity,
                    cfg: SolverConfig = SolverConfig(), op: _Operator | None = None,
                    info: list | None = None) -> np.ndarray:
    """``z`` with ``z + (eps + dt A) phi(z) = f``."""
    f = np.asarray(f, dtype=float)
    if f.shape != (ball.size,):
        raise ValidationError(f"grid function has shape {f.shape}, expected ({ball.size},)")
    if not np.all(np.isfinite(f)):
        raise ValidationError("grid function has non-finite entries")
    if not dt > 0 or eps < 0:
        raise ValidationError(f"need dt > 0 and eps >= 0, got dt={dt}, eps={eps}")
    op = op or _Operator(assemble_generator(ball))
    z, res, its, ok = _newton(f, f, eps, dt, op, phi, cfg)
    method = "newton"
    if not ok:
        z = f.copy()
        its = 0
        for e in [x for x in cfg.eps_schedule if x > eps] + [eps]:
            z, res, k, ok = _newton(f, z, e, dt, op, phi, cfg)
            its += k
        method = "continuation"
    if not ok:
        z, res, its, ok = _jacobi(f, z, eps, dt, op, phi, cfg)
        method = "jacobi"
    if not ok:
        raise NumericalFailure(
            f"resolvent did not converge after continuation and Jacobi fallback; residual {res:.3g}")
    if info is not None:
        info.append(SolveInfo(res, its, method))
    return z


def step(z_prev, dt: float, ball: BallConfig, phi: Nonlinearity, cfg: SolverConfig = SolverConfig(),
         op: _Operator | None = None, info: list | None = None) -> np.ndarray:
    """One implicit Euler step."""
    return resolvent_solve(z_prev, 0.0, dt, ball, phi, cfg, op, info)


def l1_norm(u, ball: BallConfig) -> float:
    return ball.cell_measure * math.fsum(np.abs(np.asarray(u, dtype=float)))


def mass(u, ball: BallConfig) -> float:
    return ball.cell_measure * math.fsum(np.asarray(u, dtype=float))


@dataclass
class Trajectory:
    ball: BallConfig
    times: np.ndarray
    states: list
    info: list = field(default_factory=list)
    half_diff: float | None = None

    def masses(self) -> np.ndarray:
        return np.array([mass(z, self.ball) for z in self.states])

    def linf(self) -> np.ndarray:
        return np.array([float(np.max(np.abs(z))) for z in self.states])

    def l1_diff_prev(self) -> np.ndarray:
        out = [0.0]
        for a, b in zip(self.states, self.states[1:]):
            out.append(l1_norm(b - a, self.ball))
        return np.array(out)

    def step_residuals(self, phi: Nonlinearity) -> np.ndarray:
        """``||z_i - z_(i-1) + dt A phi(z_i)||_1`` for each step."""
        op = _Operator(assemble_generator(self.ball))
        out = []
        for i in range(1, len(self.states)):
            dt = self.times[i] - self.times[i - 1]
            out.append(l1_norm(_residual(self.states[i], self.states[i - 1], 0.0, dt, op, phi), self.ball))
        return np.array(out)


def solve_pme(u0, T: float, steps: int, ball: BallConfig, phi: Nonlinearity,
              cfg: SolverConfig | None = None, compare_half: bool = False) -> Trajectory:
    """Implicit Euler iterates on ``[0, T]`` with ``steps`` equal steps."""
    if steps < 1:
        raise ValidationError(f"steps must be >= 1, got {steps}")
    if not T > 0:
        raise ValidationError(f"final time must be positive, got {T}")
    dt = T / steps
    cfg = cfg or SolverConfig(dt=dt, steps=steps)
    op = _Operator(assemble_generator(ball))
    z = np.asarray(u0, dtype=float).copy()
    states = [z]
    info: list = []
    for _ in range(steps):
        z = step(z, dt, ball, phi, cfg, op, info)
        states.append(z)
    traj = Trajectory(ball, np.linspace(0.0, T, steps + 1), states, info)
    if compare_half:
        fine = solve_pme(u0, T, 2 * steps, ball, phi, cfg)
        traj.half_diff = max(l1_norm(a - b, ball) for a, b in zip(traj.states, fine.states[::2]))
    return traj


@dataclass
class HalvingStudy:
    dts: tuple
    diffs: tuple

    @property
    def ratio(self) -> float:
        """``||z_dt - z_dt/2|| / ||z_dt/2 - z_dt/4||`` at the final time; 2 for first order."""
        return self.diffs[0] / self.diffs[1]

    @property
    def constant(self) -> float:
        return self.diffs[0] / self.dts[0]


def halving_study(u0, T: float, steps: int, ball: BallConfig, phi: Nonlinearity) -> HalvingStudy:
    runs = [solve_pme(u0, T, steps * 2 ** k, ball, phi) for k in range(3)]
    finals = [r.states[-1] for r in runs]
    diffs = (l1_norm(finals[0] - finals[1], ball), l1_norm(finals[1] - finals[2], ball))
    return HalvingStudy((T / steps, T / (2 * steps), T / (4 * steps)), diffs)


def linear_semigroup_error(u0, T: float, steps: int, ball: BallConfig) -> float:
    """``max_i ||z_i - exp(t_i G) u0||_inf`` for ``phi = id``."""
    traj = solve_pme(u0, T, steps, ball, Nonlinearity.linear())
    return max(float(np.max(np.abs(z - apply_transition(t, ball, u0))))
               for t, z in zip(traj.times, traj.states))


@dataclass
class AccretivityReport:
    trials: int
    max_excess: float
    violations: int
    max_ratio: float
    max_flux_ratio: float

    @property
    def passed(self) -> bool:
        return self.violations == 0


def accretivity_probe(pairs, dt: float, ball: BallConfig, phi: Nonlinearity, tol: float = 1e-10,
                      cfg: SolverConfig = SolverConfig()) -> AccretivityReport:
    """L1 contraction of the resolvent on the given ``(f, f~)`` pairs.

    Also records ``||dt A phi(z)||_1 / ||f||_1``, which accretivity bounds by 2.
    """
    op = _Operator(assemble_generator(ball))
    excess, ratio, flux, bad = -math.inf, 0.0, 0.0, 0
    pairs = list(pairs)
    for f, g in pairs:
        zf = resolvent_solve(f, 0.0, dt, ball, phi, cfg, op)
        zg = resolvent_solve(g, 0.0, dt, ball, phi, cfg, op)
        d_out = l1_norm(zf - zg, ball)
        d_in = l1_norm(np.asarray(f) - np.asarray(g), ball)
        excess = max(excess, d_out - d_in)
        if d_out > d_in + tol:
            bad += 1
        if d_in > 0:
            ratio = max(ratio, d_out / d_in)
        nf = l1_norm(f, ball)
        if nf > 0:
            flux = max(flux, l1_norm(dt * op(phi(zf)), ball) / nf)
    return AccretivityReport(len(pairs), excess, bad, ratio, flux)


# -- initial data -----------------------------------------------------------------------


def initial_data(spec: str, ball: BallConfig) -> np.ndarray:
    """Built-in data: ``delta``, ``indicator:<norm>``, ``random:<seed>``."""
    M = ball.size
    if spec == "delta":
        u = np.zeros(M)
        u[0] = 1.0 / ball.cell_measure
        return u
    kind, _, arg = spec.partition(":")
    if kind == "indicator":
        try:
            radius = float(arg)
        except ValueError:
            raise ValidationError(f"indicator needs a numeric norm, got {arg!r}") from None
        p = ball.params.p
        e = math.log(radius, p) if radius > 0 else math.nan
        if not (radius > 0 and abs(e - round(e)) < 1e-9):
            raise ValidationError(f"indicator norm must be a power of p={p}, got {arg}")
        e = round(e)
        norms = ball.grid.norm_levels() - ball.K
        return np.where((norms <= e) | (np.arange(M) == 0), 1.0, 0.0)
    if kind == "random":
        try:
            seed = int(arg)
        except ValueError:
            raise ValidationError(f"random needs an integer seed, got {arg!r}") from None
        return np.random.default_rng(seed).random(M)
    raise ValidationError(f"unknown initial data {spec!r}; use delta, indicator:<norm>, random:<seed> or a CSV file")


def load_initial_csv(path, ball: BallConfig) -> np.ndarray:
    u = np.zeros(ball.size)
    seen = np.zeros(ball.size, dtype=bool)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["cell", "value"]:
            raise ValidationError(f"{path}: initial data needs header 'cell,value'")
        for lineno, row in enumerate(reader, 2):
            try:
                c, v = int(row["cell"]), float(row["value"])
            except (TypeError, ValueError):
                raise ValidationError(f"{path}:{lineno}: cannot parse {row!r}") from None
            if not 0 <= c < ball.size:
                raise ValidationError(f"{path}: cell {c} outside [0, {ball.size})")
            u[c] = v
            seen[c] = True
    return u
