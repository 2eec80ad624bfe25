"""Flat ``key=value`` run configuration shared by every CLI subcommand."""

from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace

from .core import SpaceConfig
from .errors import ValidationError
from .spectral import DEFAULT_TOL, KernelParams, RadialWeight, load_weight_table

DEFAULT_SEED = 20240101


def _floats(text: str) -> tuple:
    try:
        return tuple(float(x) for x in text.replace(";", ",").split(",") if x.strip())
    except ValueError:
        raise ValidationError(f"t_list: expected comma-separated numbers, got {text!r}") from None


@dataclass(frozen=True)
class RunConfig:
    prime: int = 2
    dim: int = 1
    alpha: float | None = None
    weight_c: float = 1.0
    weight_table: str | None = None
    kappa: float = 1.0
    ball_N: int = 2
    resolution_K: int = 3
    t_list: tuple = (1.0,)
    dt: float = 0.01
    steps: int = 100
    phi_m: float = 2.0
    phi_C: float = 1.0
    paths: int = 100_000
    seed: int | None = None
    tolerance: float = DEFAULT_TOL
    output: str | None = None

    def kernel_params(self) -> KernelParams:
        space = SpaceConfig(self.prime, self.dim)
        if self.weight_table:
            weight = load_weight_table(self.weight_table)
            if self.alpha is not None and self.alpha != weight.alpha:
                raise ValidationError(
                    f"alpha={self.alpha} conflicts with alpha={weight.alpha} declared in {self.weight_table}")
        else:
            alpha = 2 * self.dim if self.alpha is None else self.alpha
            weight = RadialWeight.power_law(self.weight_c, alpha)
        return KernelParams(space, weight, self.kappa)

    def resolved_seed(self) -> int:
        if self.seed is not None:
            return self.seed
        env = os.environ.get("PADIC_SEED")
        if env:
            try:
                return int(env)
            except ValueError:
                raise ValidationError(f"PADIC_SEED must be an integer, got {env!r}") from None
        return DEFAULT_SEED


_CASTS = {
    "prime": int, "dim": int, "alpha": float, "weight_c": float, "weight_table": str,
    "kappa": float, "ball_N": int, "resolution_K": int, "t_list": _floats, "dt": float,
    "steps": int, "phi_m": float, "phi_C": float, "paths": int, "seed": int,
    "tolerance": float, "output": str,
}
KEYS = tuple(f.name for f in fields(RunConfig))


def cast_value(key: str, raw) -> object:
    if key not in _CASTS:
        raise ValidationError(f"unknown configuration key {key!r}")
    if not isinstance(raw, str):
        return raw
    try:
        return _CASTS[key](raw.strip())
    except ValueError:
        raise ValidationError(f"{key}: cannot parse {raw!r}") from None


def parse_config_text(text: str, source: str = "<config>") -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key = key.strip()
        if not sep:
            raise ValidationError(f"{source}:{lineno}: expected key=value, got {line!r}")
        if key not in _CASTS:
            raise ValidationError(f"{source}:{lineno}: unknown configuration key {key!r}")
        values[key] = cast_value(key, val)
    return values


def load_config(path) -> dict:
    """Read a config file.  A file must name the prime explicitly."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ValidationError(f"cannot read config file {path}: {exc}") from None
    values = parse_config_text(text, str(path))
    if "prime" not in values:
        raise ValidationError(f"{path}: missing required key 'prime'")
    return values


def build_config(file_values: dict | None = None, overrides: dict | None = None) -> RunConfig:
    cfg = RunConfig()
    merged = dict(file_values or {})
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    cfg = replace(cfg, **{k: cast_value(k, v) for k, v in merged.items()})
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    SpaceConfig(cfg.prime, cfg.dim)
    if cfg.kappa <= 0:
        raise ValidationError(f"kappa must be positive, got {cfg.kappa}")
    if cfg.ball_N + cfg.resolution_K < 1:
        raise ValidationError(f"resolution_K: need resolution_K >= -ball_N+1, got {cfg.resolution_K}")
    if cfg.dt <= 0:
        raise ValidationError(f"dt must be positive, got {cfg.dt}")
    if cfg.steps < 1:
        raise ValidationError(f"steps must be >= 1, got {cfg.steps}")
    if cfg.paths < 1:
        raise ValidationError(f"paths must be >= 1, got {cfg.paths}")
    if cfg.tolerance <= 0:
        raise ValidationError(f"tolerance must be positive, got {cfg.tolerance}")
    if cfg.phi_m < 1 or cfg.phi_C <= 0:
        raise ValidationError(f"need phi_m >= 1 and phi_C > 0, got {cfg.phi_m}, {cfg.phi_C}")
    if cfg.seed is not None and not 0 <= cfg.seed < 2 ** 64:
        raise ValidationError(f"seed must be in [0, 2^64), got {cfg.seed}")
    cfg.kernel_params()
