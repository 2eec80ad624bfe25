"""Radial weights and the spectral quantities built from them.

Everything reduces to the tail sum ``S(J) = sum_{j >= J} p^(nj) / w(p^j)``:

* ``lambda_N = (1 - p^-n) S(N+1)`` is the total rate of jumps longer than ``p^N``;
* ``A_w(z) = (1 - p^-n) S(gamma+2) + p^(n(gamma+1)) / w(p^(gamma+1))`` for
  ``||z|| = p^-gamma`` is the symbol of the jump operator.

Power-law and tabulated weights have closed-form tails; weights given as a
plain function go through the truncated series engine, which certifies its
tail with the geometric majorant ``p^(j(n-alpha)) / C1``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable

from .core import SpaceConfig
from .errors import SeriesToleranceError, ValidationError

DEFAULT_TOL = 1e-18
SERIES_BUDGET = 100_000


@dataclass(frozen=True)
class RadialWeight:
    """``j -> w(p^j)``, strictly increasing, with ``C1 p^(j alpha) <= w <= C2 p^(j alpha)``.

    Exactly one of ``coef`` (power law ``coef * p^(j alpha)``), ``table``
    (sorted ``(j, w)`` pairs, extended outside the window by the power-law
    envelope through the end points) or ``func`` is set.
    """

    alpha: float
    c1: float
    c2: float
    coef: float | None = None
    table: tuple = ()
    func: Callable[[int], float] | None = field(default=None, compare=True)

    def __post_init__(self):
        kinds = (self.coef is not None) + bool(self.table) + (self.func is not None)
        if kinds != 1:
            raise ValidationError("a weight needs exactly one of coef, table or func")
        if not (self.c1 > 0 and self.c2 >= self.c1):
            raise ValidationError(f"weight constants need 0 < c1 <= c2, got c1={self.c1}, c2={self.c2}")
        if self.table:
            js = [j for j, _ in self.table]
            if js != list(range(js[0], js[0] + len(js))):
                raise ValidationError("weight table must list consecutive exponents j")
            ws = [w for _, w in self.table]
            if any(w <= 0 for w in ws):
                raise ValidationError("weight table values must be positive")
            if any(b <= a for a, b in zip(ws, ws[1:])):
                raise ValidationError("weight table must be strictly increasing in j")

    @classmethod
    def power_law(cls, coef: float = 1.0, alpha: float = 2.0) -> RadialWeight:
        if coef <= 0:
            raise ValidationError(f"weight_c must be positive, got {coef}")
        return cls(alpha=alpha, c1=coef, c2=coef, coef=coef)

    @classmethod
    def from_table(cls, values: dict, alpha: float, c1: float, c2: float) -> RadialWeight:
        items = tuple(sorted((int(j), w) for j, w in values.items()))
        if not items:
            raise ValidationError("weight table is empty")
        return cls(alpha=alpha, c1=c1, c2=c2, table=items)

    @classmethod
    def from_function(cls, func: Callable[[int], float], alpha: float, c1: float, c2: float) -> RadialWeight:
        return cls(alpha=alpha, c1=c1, c2=c2, func=func)

    @property
    def kind(self) -> str:
        if self.coef is not None:
            return "power"
        return "table" if self.table else "function"

    @property
    def integral_alpha(self) -> bool:
        return float(self.alpha).is_integer()

    def window(self):
        if not self.table:
            return None
        return self.table[0][0], self.table[-1][0]

    def is_extended(self, j: int) -> bool:
        """True when ``w(p^j)`` comes from the envelope rather than the table."""
        win = self.window()
        return win is not None and not (win[0] <= j <= win[1])

    def value(self, j: int, p: int) -> float:
        if self.coef is not None:
            return self.coef * float(p) ** (j * self.alpha)
        if self.func is not None:
            return float(self.func(j))
        j0, j1 = self.window()
        if j < j0:
            return self.table[0][1] * float(p) ** ((j - j0) * self.alpha)
        if j > j1:
            return self.table[-1][1] * float(p) ** ((j - j1) * self.alpha)
        return self.table[j - j0][1]

    def exact_value(self, j: int, p: int) -> Fraction | None:
        """``w(p^j)`` as an exact rational when that is possible, else None."""
        if self.func is not None or not self.integral_alpha:
            return None
        a = int(self.alpha)
        if self.coef is not None:
            return Fraction(self.coef) * Fraction(p) ** (j * a)
        j0, j1 = self.window()
        if j < j0:
            return Fraction(self.table[0][1]) * Fraction(p) ** ((j - j0) * a)
        if j > j1:
            return Fraction(self.table[-1][1]) * Fraction(p) ** ((j - j1) * a)
        return Fraction(self.table[j - j0][1])


def load_weight_table(path) -> RadialWeight:
    """Read a ``j,w`` CSV with ``# alpha=``, ``# c1=``, ``# c2=`` header lines."""
    meta = {}
    rows = []
    with open(path, newline="") as fh:
        lines = []
        for line in fh:
            stripped = line.strip()
            if stripped.startswith("#"):
                key, _, val = stripped.lstrip("#").partition("=")
                meta[key.strip()] = val.strip()
            elif stripped:
                lines.append(stripped)
    reader = csv.DictReader(lines)
    if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["j", "w"]:
        raise ValidationError(f"{path}: weight table needs header 'j,w'")
    for lineno, row in enumerate(reader, 2):
        try:
            rows.append((int(row["j"]), float(row["w"])))
        except (TypeError, ValueError):
            raise ValidationError(f"{path}: cannot parse weight row {lineno - 1}: {row!r}") from None
    try:
        meta_vals = {key: float(meta[key]) for key in ("alpha", "c1", "c2") if key in meta}
    except ValueError:
        raise ValidationError(f"{path}: non-numeric metadata {meta!r}") from None
    for key in ("alpha", "c1", "c2"):
        if key not in meta:
            raise ValidationError(f"{path}: missing '# {key}=' metadata line")
    return RadialWeight.from_table(dict(rows), meta_vals["alpha"], meta_vals["c1"], meta_vals["c2"])


@dataclass(frozen=True)
class KernelParams:
    space: SpaceConfig
    weight: RadialWeight
    kappa: float = 1.0

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValidationError(f"kappa must be positive, got {self.kappa}")
        if not self.weight.alpha > self.space.n:
            raise ValidationError(
                f"alpha must exceed the dimension n={self.space.n}, got {self.weight.alpha}")
        w = self.weight
        if w.table:
            p = self.space.p
            for j, val in w.table:
                env = float(p) ** (j * w.alpha)
                if not (w.c1 * env * (1 - 1e-12) <= val <= w.c2 * env * (1 + 1e-12)):
                    raise ValidationError(
                        f"weight table entry j={j}, w={val} violates c1*p^(j alpha) <= w <= c2*p^(j alpha)")

    @classmethod
    def default(cls, p: int = 2, n: int = 1, kappa: float = 1.0, coef: float = 1.0, alpha=None) -> KernelParams:
        alpha = 2 * n if alpha is None else alpha
        return cls(SpaceConfig(p, n), RadialWeight.power_law(coef, alpha), kappa)

    @property
    def p(self) -> int:
        return self.space.p

    @property
    def n(self) -> int:
        return self.space.n

    @property
    def alpha(self) -> float:
        return self.weight.alpha

    def w(self, j: int) -> float:
        return self.weight.value(j, self.space.p)

    @property
    def sphere_factor(self) -> float:
        """``1 - p^-n``: relative Haar measure of a unit sphere."""
        return 1.0 - float(self.p) ** (-self.n)


def _geometric_ratio(params: KernelParams) -> float:
    return float(params.p) ** (params.n - params.alpha)


def series_tail_sum(params: KernelParams, J: int, tol: float = DEFAULT_TOL,
                    budget: int = SERIES_BUDGET) -> tuple[float, float]:
    """Truncated ``sum_{j>=J} p^(nj)/w(p^j)`` with a certified tail bound.

    Returns ``(value, tail_bound)``.  Works for any weight through ``w.value``.
    """
    p, n = params.p, params.n
    r = _geometric_ratio(params)
    c1 = params.weight.c1
    logp = math.log(p)
    first = float(p) ** (n * J) / params.w(J)
    target = min(tol, 1e-17 * first) if first > 0 else tol
    # bound after summing j = J..J_end is p^((J_end+1)(n-alpha)) / (c1 (1-r))
    need = math.log(target * c1 * (1 - r)) / ((n - params.alpha) * logp) - 1
    J_end = max(J, math.ceil(need))
    if J_end - J + 1 > budget:
        J_end = J + budget - 1
        bound = float(p) ** ((J_end + 1) * (n - params.alpha)) / (c1 * (1 - r))
        raise SeriesToleranceError(
            f"tail sum from j={J} needs more than {budget} terms for tol={tol:g}; "
            f"achieved bound {bound:.3g}", achieved=bound)
    terms = [float(p) ** (n * j) / params.w(j) for j in range(J_end, J - 1, -1)]
    bound = float(p) ** ((J_end + 1) * (n - params.alpha)) / (c1 * (1 - r))
    return math.fsum(terms), bound


def _power_tail(coef: float, p: int, n: int, alpha: float, J: int) -> float:
    r = float(p) ** (n - alpha)
    return float(p) ** (J * (n - alpha)) / (coef * (1 - r))


def tail_sum(params: KernelParams, J: int, tol: float = DEFAULT_TOL) -> float:
    """``sum_{j >= J} p^(nj) / w(p^j)``."""
    w = params.weight
    p, n = params.p, params.n
    if w.coef is not None:
        return _power_tail(w.coef, p, n, w.alpha, J)
    if w.func is not None:
        return series_tail_sum(params, J, tol)[0]
    j0, j1 = w.window()
    parts = []
    if J <= j1:
        # window entries, plus the envelope segment below the window if J < j0
        parts.extend(float(p) ** (n * j) / w.value(j, p) for j in range(J, j1 + 1))
        tail_from = j1 + 1
    else:
        tail_from = J
    # beyond the window w(p^j) = w(p^j1) p^((j-j1) alpha)
    parts.append(float(p) ** (n * j1) / w.table[-1][1] * _power_tail(1.0, p, n, w.alpha, tail_from - j1))
    parts.sort(key=abs)
    return math.fsum(parts)


def tail_sum_exact(params: KernelParams, J: int) -> Fraction | None:
    """Exact rational tail sum, or None when the weight does not allow it."""
    w = params.weight
    p, n = params.p, params.n
    if w.func is not None or not w.integral_alpha:
        return None
    a = int(w.alpha)
    r = Fraction(p) ** (n - a)
    if w.coef is not None:
        return Fraction(p) ** (J * (n - a)) / (Fraction(w.coef) * (1 - r))
    j0, j1 = w.window()
    total = Fraction(0)
    for j in range(J, j1 + 1):
        total += Fraction(p) ** (n * j) / w.exact_value(j, p)
    tail_from = max(J, j1 + 1)
    total += (Fraction(p) ** (n * j1) / Fraction(w.table[-1][1])
              * r ** (tail_from - j1) / (1 - r))
    return total


@lru_cache(maxsize=65536)
def lambda_n(N: int, params: KernelParams, tol: float = DEFAULT_TOL) -> float:
    """Total rate of jumps with norm ``> p^N`` per unit ``kappa``."""
    return params.sphere_factor * tail_sum(params, N + 1, tol)


def lambda_exact(N: int, params: KernelParams) -> Fraction | None:
    s = tail_sum_exact(params, N + 1)
    if s is None:
        return None
    return (1 - Fraction(1, params.p ** params.n)) * s


@lru_cache(maxsize=262144)
def a_w(gamma, params: KernelParams, tol: float = DEFAULT_TOL) -> float:
    """Symbol ``A_w(z)`` at ``||z||_p = p^-gamma``; ``gamma=None`` means ``z = 0``."""
    if gamma is None:
        return 0.0
    p, n = params.p, params.n
    head = float(p) ** (n * (gamma + 1)) / params.w(gamma + 1)
    return params.sphere_factor * tail_sum(params, gamma + 2, tol) + head


def a_w_norm(k: int, params: KernelParams, tol: float = DEFAULT_TOL) -> float:
    """``A_w`` at ``||z||_p = p^k``."""
    return a_w(-k, params, tol)


def i_ball(gamma_z, N: int, params: KernelParams, tol: float = DEFAULT_TOL) -> float:
    """``int_{B_N} (1 - chi(z.x)) / w(||x||) dx`` for ``||z|| = p^-gamma_z``."""
    if gamma_z is None or gamma_z >= N:
        return 0.0
    return a_w(gamma_z, params, tol) - lambda_n(N, params, tol)


def symbol_upper_constant(params: KernelParams) -> float:
    """Analytic ``C4`` with ``A_w(xi) <= C4 ||xi||^(alpha-n)`` from ``w >= C1 p^(j alpha)``."""
    r = _geometric_ratio(params)
    return r / params.weight.c1 * (1 + params.sphere_factor * r / (1 - r))


def symbol_lower_constant(params: KernelParams) -> float:
    """Analytic ``C3`` with ``A_w(xi) >= C3 ||xi||^(alpha-n)`` from ``w <= C2 p^(j alpha)``."""
    r = _geometric_ratio(params)
    return r / params.weight.c2 * (1 + params.sphere_factor * r / (1 - r))


@dataclass
class SymbolBoundsReport:
    gammas: list
    ratios: list
    c3: float
    c4: float
    c3_analytic: float
    c4_analytic: float
    extended: list
    ok: bool
    messages: list


def verify_symbol_bounds(params: KernelParams, gammas, tol: float = DEFAULT_TOL) -> SymbolBoundsReport:
    """Empirical ``C3, C4`` in ``C3 ||xi||^(alpha-n) <= A_w <= C4 ||xi||^(alpha-n)``."""
    p, n, alpha = params.p, params.n, params.alpha
    gammas = list(gammas)
    ratios = [a_w(g, params, tol) / float(p) ** (-g * (alpha - n)) for g in gammas]
    c3, c4 = min(ratios), max(ratios)
    msgs = []
    ok = True
    if not (math.isfinite(c3) and math.isfinite(c4) and c3 > 0):
        ok = False
        msgs.append(f"non-positive or non-finite symbol constants: C3={c3}, C4={c4}")
    lo, hi = symbol_lower_constant(params), symbol_upper_constant(params)
    if c3 < lo * (1 - 1e-12) or c4 > hi * (1 + 1e-12):
        ok = False
        msgs.append(f"empirical [C3, C4]=[{c3:.6g}, {c4:.6g}] escapes the analytic [{lo:.6g}, {hi:.6g}]")
    extended = [params.weight.is_extended(g + 1) for g in gammas]
    if any(extended):
        msgs.append("some symbol values use the power-law extension of the weight table")
    return SymbolBoundsReport(gammas, ratios, c3, c4, lo, hi, extended, ok, msgs)
