"""Command-line entry point.

Exit codes: 0 success, 1 invalid input, 2 numerical failure, 3 statistical
check failure in ``verify``.
"""

from __future__ import annotations

import argparse
import sys

from . import report
from .ball import BallConfig
from .config import KEYS, build_config, load_config
from .errors import NumericalFailure, PadicError, ValidationError
from .pme import Nonlinearity, initial_data, load_initial_csv, solve_pme
from .process import JumpRateTable, mc_transition_check, run_paths
from .verify import CRITERIA, format_table, run_all

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_STATISTICAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


def _ints(text: str) -> list:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ValidationError(f"expected comma-separated integers, got {text!r}") from None


def _floats(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ValidationError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key=value configuration file")
    for key in KEYS:
        common.add_argument(f"--{key}", dest=f"cfg_{key}", default=None, metavar=key.upper())
    common.add_argument("--threads", type=int, default=1, help="worker threads (0 = all cores)")

    parser = _Parser(prog="padic-diffusion", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    k = sub.add_parser("kernel", parents=[common], help="heat kernel Z(t, x) table")
    k.add_argument("--t", help="comma-separated times (default: t_list)")
    k.add_argument("--beta", default="0", help="comma-separated norm exponents")

    sub.add_parser("spectral", parents=[common], help="A_w, lambda_N, I_ball per character norm")

    b = sub.add_parser("ball", parents=[common], help="ball kernel Z_N, c(t), c'(t)")
    b.add_argument("--t", help="comma-separated times (default: t_list)")
    b.add_argument("--matrix", help="also write the transition matrix at the first time to this CSV")

    m = sub.add_parser("simulate", parents=[common], help="Monte Carlo of the ball process")
    m.add_argument("--horizon", type=float, help="final time (default: first of t_list)")
    m.add_argument("--start", type=int, default=0, help="starting cell index")
    m.add_argument("--report", choices=("density", "paths"), default="density")

    v = sub.add_parser("solve", parents=[common], help="porous-medium solver on the ball")
    v.add_argument("--init", default="delta", help="delta, indicator:<norm>, random:<seed> or a cell,value CSV")
    v.add_argument("--report", choices=("values", "summary"), default="values")
    v.add_argument("--summary", help="also write the t,mass,linf,l1_diff_prev summary to this CSV")

    r = sub.add_parser("verify", parents=[common], help="run the acceptance criteria")
    r.add_argument("--preset", choices=("quick", "full"), default="quick")
    r.add_argument("--criteria", help="comma-separated subset, e.g. 1,4")
    return parser


def _config(args):
    file_values = load_config(args.config) if args.config else None
    overrides = {key: getattr(args, f"cfg_{key}") for key in KEYS}
    return build_config(file_values, overrides)


def _emit(text: str, path: str | None, out) -> None:
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        out.write(text)


def _run(args, out) -> int:
    cfg = _config(args)
    params = cfg.kernel_params()
    if args.command == "kernel":
        ts = _floats(args.t) if args.t else list(cfg.t_list)
        _emit(report.kernel_csv(ts, _ints(args.beta), params, cfg.tolerance), cfg.output, out)
        return EXIT_OK
    if args.command == "spectral":
        _emit(report.spectral_csv(params, cfg.ball_N, cfg.resolution_K, cfg.tolerance), cfg.output, out)
        return EXIT_OK
    if args.command == "verify":
        only = set(_ints(args.criteria)) if args.criteria else None
        if only is not None and not only <= set(range(1, len(CRITERIA) + 1)):
            raise ValidationError(f"--criteria must name criteria 1..{len(CRITERIA)}, got {args.criteria!r}")
        results = run_all(args.preset, cfg.resolved_seed(), only)
        _emit(format_table(results) + "\n", cfg.output, out)
        if all(r.passed for r in results):
            return EXIT_OK
        if any(r.statistical_failure for r in results):
            return EXIT_STATISTICAL
        return EXIT_NUMERICAL

    ball = BallConfig(params, cfg.ball_N, cfg.resolution_K)
    if args.command == "ball":
        ts = _floats(args.t) if args.t else list(cfg.t_list)
        _emit(report.ball_csv(ts, ball, cfg.tolerance), cfg.output, out)
        if args.matrix:
            _emit(report.matrix_csv(ts[0], ball), args.matrix, out)
        return EXIT_OK
    if args.command == "simulate":
        T = args.horizon if args.horizon is not None else cfg.t_list[0]
        if not 0 <= args.start < ball.size:
            raise ValidationError(f"start cell {args.start} outside [0, {ball.size})")
        seed = cfg.resolved_seed()
        if args.report == "paths":
            b = run_paths(args.start, T, JumpRateTable.for_ball(ball), cfg.paths, seed,
                          threads=args.threads, record=True)
            _emit(report.paths_csv(b.log_path, b.log_time, b.log_cell), cfg.output, out)
        else:
            rep = mc_transition_check(args.start, T, cfg.paths, ball, seed, args.threads)
            _emit(report.density_csv(rep), cfg.output, out)
        return EXIT_OK
    if args.command == "solve":
        if args.init.endswith(".csv"):
            u0 = load_initial_csv(args.init, ball)
        else:
            u0 = initial_data(args.init, ball)
        traj = solve_pme(u0, cfg.dt * cfg.steps, cfg.steps, ball, Nonlinearity.power(cfg.phi_m, cfg.phi_C))
        text = report.summary_csv(traj) if args.report == "summary" else report.solution_csv(traj)
        _emit(text, cfg.output, out)
        if args.summary:
            _emit(report.summary_csv(traj), args.summary, out)
        return EXIT_OK
    raise ValidationError(f"unknown command {args.command!r}")


def run(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        return _run(args, out)
    except ValidationError as exc:
        err.write(f"error: {exc}\n")
        return EXIT_INVALID
    except (NumericalFailure, PadicError) as exc:
        err.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERICAL
    except OSError as exc:
        err.write(f"error: {exc}\n")
        return EXIT_INVALID


def main() -> None:
    sys.exit(run())
