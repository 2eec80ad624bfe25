"""CSV tables emitted by the command line; every float is written with 17 significant digits."""

from __future__ import annotations

import io

import numpy as np

from .ball import BallConfig, c_prime, c_t, transition_matrix, z_ball
from .heat import dt_z, upper_bound, z_full
from .process import TransitionReport
from .spectral import KernelParams, a_w, i_ball, lambda_n


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def render(header, rows) -> str:
    out = io.StringIO()
    out.write(",".join(header) + "\n")
    for row in rows:
        out.write(",".join(fmt(v) for v in row) + "\n")
    return out.getvalue()


def kernel_csv(ts, betas, params: KernelParams, tol: float) -> str:
    rows = []
    for t in ts:
        for b in betas:
            rows.append((float(t), int(b), float(params.p) ** b, z_full(t, b, params, tol),
                         upper_bound(t, b, params), dt_z(t, b, params, tol)))
    return render(("t", "beta", "norm", "Z", "upper_bound", "dtZ"), rows)


def spectral_csv(params: KernelParams, N: int, K: int, tol: float) -> str:
    """One row per character norm ``p^k``, ``-N < k <= K``, plus the trivial class."""
    lam = lambda_n(N, params, tol)
    q = params.space.q
    rows = [(0.0, 0.0, lam, 0.0, 1)]
    for k in range(-N + 1, K + 1):
        A = a_w(-k, params, tol)
        rows.append((float(params.p) ** k, A, lam, i_ball(-k, N, params, tol), (q - 1) * q ** (k + N - 1)))
    return render(("norm", "A_w", "lambda_N", "I_ball", "multiplicity"), rows)


def ball_csv(ts, ball: BallConfig, tol: float) -> str:
    rows = []
    for t in ts:
        ct, cp = c_t(t, ball, tol), c_prime(t, ball, tol)
        for b in range(-ball.K + 1, ball.N + 1):
            zn = z_ball(t, b, ball, tol) if t > 0 else 0.0
            rows.append((float(t), b, zn, ct, cp))
    return render(("t", "beta", "ZN", "c", "cprime"), rows)


def matrix_csv(t: float, ball: BallConfig) -> str:
    P = transition_matrix(t, ball)
    return render(tuple(str(j) for j in range(P.shape[1])), P.tolist())


def density_csv(rep: TransitionReport) -> str:
    rows = zip(range(len(rep.analytic)), rep.density.counts, rep.density.probs, rep.analytic, rep.zscores)
    return render(("cell", "count", "prob", "analytic", "zscore"), rows)


def paths_csv(paths, times, cells) -> str:
    return render(("path", "event_time", "cell"), zip(paths, times, cells))


def solution_csv(traj) -> str:
    rows = []
    for t, z in zip(traj.times, traj.states):
        rows.extend((float(t), c, v) for c, v in enumerate(z))
    return render(("t", "cell", "value"), rows)


def summary_csv(traj) -> str:
    rows = zip(traj.times, traj.masses(), traj.linf(), traj.l1_diff_prev())
    return render(("t", "mass", "linf", "l1_diff_prev"), rows)
