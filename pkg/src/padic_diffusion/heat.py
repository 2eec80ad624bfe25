"""Full-space heat kernel ``Z(t, x)`` and related radial series.

Sign convention: the operator ``Wu(x) = kappa * int (u(x) - u(x-y)) / w(||y||) dy``
is positive with symbol ``kappa * A_w``; the heat equation is ``u_t + Wu = 0``
and its kernel is the inverse Fourier transform of ``exp(-kappa t A_w)``.

All radial transforms are written against ``g - g(0)`` so that the
``sum_j p^(-nj)`` series converges geometrically and small-``t`` values keep
full relative precision (``expm1`` instead of ``exp - 1``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import haar_sphere
from .errors import SeriesToleranceError, ValidationError
from .spectral import DEFAULT_TOL, KernelParams, a_w, symbol_upper_constant

MAX_TERMS = 5000
REL_TOL = 1e-17


@dataclass(frozen=True)
class RadialFunction:
    """Radial ``g(xi)`` stored as ``g(p^j)`` for ``j_min <= j <= j_max``.

    Below the window ``|g(p^j) - at_zero| <= env_const * p^(j * env_rate)``.
    """

    j_min: int
    values: tuple
    at_zero: float = 0.0
    env_const: float = 0.0
    env_rate: float = 0.0

    @property
    def j_max(self) -> int:
        return self.j_min + len(self.values) - 1

    @classmethod
    def tabulate(cls, fn: Callable[[int], float], j_min: int, j_max: int, at_zero: float = 0.0,
                 env_const: float = 0.0, env_rate: float = 0.0) -> RadialFunction:
        return cls(j_min, tuple(float(fn(j)) for j in range(j_min, j_max + 1)), at_zero, env_const, env_rate)

    def __call__(self, j: int) -> float:
        if not self.j_min <= j <= self.j_max:
            raise ValidationError(f"norm exponent {j} outside the stored window [{self.j_min}, {self.j_max}]")
        return self.values[j - self.j_min]

    def __add__(self, other: RadialFunction) -> RadialFunction:
        j_min = max(self.j_min, other.j_min)
        j_max = min(self.j_max, other.j_max)
        if j_max < j_min:
            raise ValidationError("radial functions have disjoint windows")
        vals = tuple(self(j) + other(j) for j in range(j_min, j_max + 1))
        rate = min(self.env_rate, other.env_rate)
        return RadialFunction(j_min, vals, self.at_zero + other.at_zero,
                              self.env_const + other.env_const, rate)


def _transform(h: Callable[[int], float], beta: int, p: int, n: int, env_const: float,
               env_rate: float, j_stop=None, tol: float = DEFAULT_TOL, min_terms: int = 1) -> tuple[float, float]:
    """``p^(-n beta) [(1-p^-n) sum_{j>=0} p^(-nj) h(-(beta+j)) - h(1-beta)]``.

    ``h(j)`` is ``g(p^j) - g(0)``; the ``g(0)`` parts cancel exactly.  The
    envelope is trusted only for terms past index ``min_terms``.
    Returns ``(value, tail_bound)``.
    """
    decay = n + env_rate
    if decay <= 0:
        raise SeriesToleranceError(
            f"radial transform diverges: envelope rate {env_rate} <= -n")
    pf = float(p)
    scale = pf ** (-n * beta)
    sphere = 1.0 - pf ** (-n)
    last = h(1 - beta)
    # far from the origin the value itself is tiny; also ask for relative accuracy
    target = tol
    if last != 0.0:
        target = min(tol, REL_TOL * scale * abs(last))
    terms = []
    bound = math.inf
    for j in range(MAX_TERMS):
        if j_stop is not None and -(beta + j) < j_stop:
            break
        terms.append(pf ** (-n * j) * h(-(beta + j)))
        # remaining j' > j, with |h(p^k)| <= C p^(k rate)
        bound = (scale * sphere * env_const * pf ** (-beta * env_rate)
                 * pf ** (-(j + 1) * decay) / (1.0 - pf ** (-decay)))
        if bound <= target and j >= min_terms:
            break
    else:
        raise SeriesToleranceError(f"radial transform did not reach tol={tol:g}", achieved=bound)
    if j_stop is not None and bound > target:
        raise SeriesToleranceError(
            f"radial function window ends at p^{j_stop}; tail bound {bound:.3g} exceeds tol={tol:g}",
            achieved=bound)
    terms.reverse()
    value = scale * (sphere * math.fsum(terms) - last)
    return value, bound


def radial_inverse_fourier(g: RadialFunction, beta: int, p: int, n: int, tol: float = DEFAULT_TOL) -> float:
    """``int g(xi) chi(-x.xi) dxi`` at ``||x|| = p^beta``."""
    if g.j_max < 1 - beta:
        raise ValidationError(f"need g up to norm p^{1 - beta}, window ends at p^{g.j_max}")
    # the envelope only describes g below its window, so sum the whole window first
    value, _ = _transform(lambda j: g(j) - g.at_zero, beta, p, n, g.env_const, g.env_rate,
                          j_stop=g.j_min, tol=tol, min_terms=max(1, -beta - g.j_min))
    return value


def _check_t(t):
    if not t > 0:
        raise ValidationError(f"time must be positive, got t={t}")


def _direct_transform(g: Callable[[int], float], beta: int, p: int, n: int,
                      g_sup: Callable[[int], float], tol: float = DEFAULT_TOL) -> float:
    """``sum_{k <= -beta} |S_k| g(p^k) - p^(-n beta) g(p^(1-beta))``.

    Same value as ``_transform`` but summed outward from the large frequencies;
    accurate near the origin where ``g`` is already small at ``p^(1-beta)``.
    ``g_sup(k)`` bounds ``|g(p^j)|`` for all ``j < k``.
    """
    pf = float(p)
    sphere = 1.0 - pf ** (-n)
    terms = []
    for k in range(-beta, -beta - MAX_TERMS, -1):
        terms.append(sphere * pf ** (n * k) * g(k))
        # sum_{j<k} |S_j| = p^(n(k-1))
        bound = g_sup(k) * pf ** (n * (k - 1))
        if bound <= tol or bound <= REL_TOL * abs(math.fsum(terms)):
            break
    else:
        raise SeriesToleranceError(f"direct radial sum did not reach tol={tol:g}")
    terms.reverse()
    terms.append(-pf ** (-n * beta) * g(1 - beta))
    return math.fsum(terms)


def _near_origin(kt: float, beta: int, params: KernelParams) -> bool:
    return kt * a_w(beta - 1, params) > 1.0


def z_full(t: float, beta: int, params: KernelParams, tol: float = DEFAULT_TOL) -> float:
    """Heat kernel ``Z(t, x)`` at ``||x||_p = p^beta``."""
    _check_t(t)
    kt = params.kappa * t
    if _near_origin(kt, beta, params):
        return _direct_transform(lambda k: math.exp(-kt * a_w(-k, params)), beta,
                                 params.p, params.n, lambda k: 1.0, tol)

    def h(j):
        return math.expm1(-kt * a_w(-j, params))

    c4 = symbol_upper_constant(params)
    return _transform(h, beta, params.p, params.n, kt * c4, params.alpha - params.n, tol=tol)[0]


def dt_z(t: float, beta: int, params: KernelParams, tol: float = DEFAULT_TOL) -> float:
    """``d/dt Z(t, x)`` at ``||x||_p = p^beta``."""
    _check_t(t)
    kappa = params.kappa

    def g(j):
        A = a_w(-j, params)
        return -kappa * A * math.exp(-kappa * t * A)

    if _near_origin(kappa * t, beta, params):
        # kappa A e^(-kt A) <= kappa A, and A decreases towards the origin of frequency space
        return _direct_transform(g, beta, params.p, params.n,
                                 lambda k: kappa * a_w(1 - k, params), tol)
    c4 = symbol_upper_constant(params)
    return _transform(g, beta, params.p, params.n, kappa * c4, params.alpha - params.n, tol=tol)[0]


def _center_series(t, M, params, weight_fn, envelope, tol):
    """``sum_{gamma>=M} (1-p^-n) p^(-n(gamma-M)) weight_fn(A_w(p^-gamma))`` with tail control.

    ``envelope`` is increasing in ``A`` and bounds ``|weight_fn|``.
    """
    p, n = float(params.p), params.n
    sphere = params.sphere_factor
    c4 = symbol_upper_constant(params)
    terms = []
    for k in range(MAX_TERMS):
        gamma = M + k
        terms.append(sphere * p ** (-n * k) * weight_fn(a_w(gamma, params)))
        # A_w <= c4 p^(-gamma(alpha-n)) on the remaining terms
        a_next = c4 * p ** (-(gamma + 1) * (params.alpha - params.n))
        if k >= 1 and envelope(a_next) * p ** (-n * (k + 1)) / (1 - p ** (-n)) <= tol:
            break
    else:
        raise SeriesToleranceError(f"center series did not converge for t={t}, M={M}")
    terms.reverse()
    return math.fsum(terms)


def z_center_defect(t: float, M: int, params: KernelParams, tol: float = DEFAULT_TOL) -> float:
    """``1 - int_{B_M} Z(t, x) dx`` (mass of the kernel outside ``B_M``)."""
    _check_t(t)
    kt = params.kappa * t
    weight = lambda A: math.expm1(-kt * A)  # noqa: E731
    return -_center_series(t, M, params, weight, lambda A: -weight(A), tol)


def z_center_mass(t: float, M: int, params: KernelParams, tol: float = DEFAULT_TOL) -> float:
    """``int_{B_M} Z(t, x) dx``."""
    return 1.0 - z_center_defect(t, M, params, tol)


def z_symbol_moment(t: float, M: int, params: KernelParams, tol: float = DEFAULT_TOL) -> float:
    """``p^(nM) int_{||xi|| <= p^-M} A_w(xi) exp(-kappa t A_w(xi)) dxi``."""
    kt = params.kappa * t
    return _center_series(t, M, params, lambda A: A * math.exp(-kt * A), lambda A: A, tol)


def upper_bound(t: float, beta: int, params: KernelParams) -> float:
    """Right side of the kernel upper bound, ``2^alpha max(C1, C2) kt (||x|| + kt^(1/(alpha-n)))^-alpha``."""
    _check_t(t)
    alpha, n = params.alpha, params.n
    kt = params.kappa * t
    const = 2.0 ** alpha * max(params.weight.c1, params.weight.c2)
    return const * kt * (float(params.p) ** beta + kt ** (1.0 / (alpha - n))) ** (-alpha)


def radial_convolution(f: Callable[[int], float], g: Callable[[int], float],
                       mass_f: Callable[[int], float], mass_g: Callable[[int], float],
                       beta: int, params: KernelParams, tol: float = 1e-20) -> float:
    """``(f * g)(x)`` at ``||x|| = p^beta`` for radial ``f, g``.

    ``mass_f(M)`` is ``int_{B_M} f``.  The integration variable ``y`` splits into
    ``||y|| < p^beta`` (then ``||x-y|| = p^beta``), ``||y|| > p^beta`` (then
    ``||x-y|| = ||y||``) and the sphere ``||y|| = p^beta``, on which
    ``||x-y|| = p^k`` has measure ``haar_sphere(k)`` for ``k < beta`` and
    ``p^(n beta)(1 - 2p^-n)`` for ``k = beta``.
    """
    p, n = params.p, params.n
    cfg = params.space
    fb, gb = f(beta), g(beta)
    same = float(p) ** (n * beta) * (1.0 - 2.0 * float(p) ** (-n))
    parts = [fb * mass_g(beta - 1), gb * mass_f(beta - 1), fb * gb * same]
    outer = []
    for k in range(beta + 1, beta + MAX_TERMS):
        term = f(k) * g(k) * float(haar_sphere(k, cfg))
        outer.append(term)
        if abs(term) <= tol and k > beta + 2:
            break
    outer.reverse()
    parts.append(math.fsum(outer))
    return math.fsum(parts)


def chapman_kolmogorov_check(t: float, s: float, beta: int, params: KernelParams,
                             tol: float = DEFAULT_TOL) -> float:
    """``|Z(t+s, x) - (Z_t * Z_s)(x)|`` at ``||x|| = p^beta``."""
    _check_t(t)
    _check_t(s)
    lhs = z_full(t + s, beta, params, tol)
    rhs = radial_convolution(
        lambda k: z_full(t, k, params, tol), lambda k: z_full(s, k, params, tol),
        lambda M: z_center_mass(t, M, params, tol), lambda M: z_center_mass(s, M, params, tol),
        beta, params)
    return abs(lhs - rhs)


def sphere_mass_total(t: float, params: KernelParams, beta_min: int, kernel=None,
                      tol: float = 1e-20) -> float:
    """``int_{B_beta_min} Z + sum_{beta > beta_min} Z(t, beta) |S_beta|``; equals 1."""
    kernel = kernel or (lambda b: z_full(t, b, params))
    cfg = params.space
    terms = []
    for beta in range(beta_min + 1, beta_min + MAX_TERMS):
        term = kernel(beta) * float(haar_sphere(beta, cfg))
        # sphere volumes grow with beta, so only stop once the terms are falling
        if abs(term) <= tol and beta > 0 and terms and abs(term) < abs(terms[-1]):
            terms.append(term)
            break
        terms.append(term)
    terms.reverse()
    return math.fsum(terms + [z_center_mass(t, beta_min, params)])


def kernel_table(ts, betas, params: KernelParams) -> np.ndarray:
    """Rows ``(t, beta, norm, Z, upper_bound, dtZ)``."""
    rows = []
    for t in ts:
        for b in betas:
            rows.append((t, b, float(params.p) ** b, z_full(t, b, params),
                         upper_bound(t, b, params), dt_z(t, b, params)))
    return np.array(rows, dtype=float).reshape(-1, 6)
