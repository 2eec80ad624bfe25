"""Truncated p-adic arithmetic on balls, Haar measures, characters and cell indexing.

A point of the ball ``B_N = {||x||_p <= p^N}`` in ``Q_p^n`` is kept modulo
``(p^K Z_p)^n``: every coordinate carries ``L = N + K`` base-p digits, digit
``m`` being the coefficient of ``p^(-N+m)``.  Equivalently coordinate ``i`` is
``A_i * p^(-N)`` with the integer ``A_i = sum_m d_{i,m} p^m`` taken mod ``p^L``.

Cells are enumerated most-significant scale first with the n coordinates
interleaved inside each scale, so a contiguous index block of length
``p^(n*l)`` is exactly one ball of radius ``p^(-K+l)``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import InsufficientPrecision, ValidationError


def is_prime(p: int) -> bool:
    if p < 2:
        return False
    if p < 4:
        return True
    if p % 2 == 0:
        return False
    return all(p % d for d in range(3, math.isqrt(p) + 1, 2))


class _BelowResolution:
    """Norm exponent of a point whose retained digits are all zero.

    Orders below every integer exponent.
    """

    __slots__ = ()
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "BELOW_RESOLUTION"

    def __reduce__(self):
        return (_BelowResolution, ())

    def __eq__(self, other):
        return other is self

    def __hash__(self):
        return hash("BELOW_RESOLUTION")

    def __lt__(self, other):
        return other is not self

    def __le__(self, other):
        return True

    def __gt__(self, other):
        return False

    def __ge__(self, other):
        return other is self


BELOW_RESOLUTION = _BelowResolution()


@dataclass(frozen=True)
class SpaceConfig:
    p: int
    n: int = 1

    def __post_init__(self):
        if not isinstance(self.p, (int, np.integer)) or not is_prime(int(self.p)):
            raise ValidationError(f"prime: p must be a prime integer, got {self.p!r}")
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise ValidationError(f"dim: n must be an integer >= 1, got {self.n!r}")

    @property
    def q(self) -> int:
        """Number of cells in one scale block, ``p^n``."""
        return self.p ** self.n


def haar_ball(N: int, config: SpaceConfig) -> Fraction:
    return Fraction(config.p) ** (config.n * N)


def haar_sphere(j: int, config: SpaceConfig) -> Fraction:
    p, n = config.p, config.n
    return (1 - Fraction(1, p ** n)) * Fraction(p) ** (n * j)


def character_sphere_integral(j: int, z_exp, config: SpaceConfig) -> Fraction:
    """Integral of ``chi(z.x)`` over the sphere ``||x|| = p^j`` for ``||z|| = p^z_exp``.

    ``z_exp`` may be ``BELOW_RESOLUTION`` for ``z = 0``.
    """
    if z_exp is BELOW_RESOLUTION:
        return haar_sphere(j, config)
    e = z_exp + j
    if e <= 0:
        return haar_sphere(j, config)
    if e == 1:
        return -haar_ball(j - 1, config)
    return Fraction(0)


def _coordinate_norm_exponent(A: int, p: int, N: int, L: int):
    if A % p ** L == 0:
        return BELOW_RESOLUTION
    m = 0
    while A % p == 0:
        A //= p
        m += 1
    return N - m


@dataclass(frozen=True)
class PAdicPoint:
    """A coset ``x + (p^K Z_p)^n`` inside ``B_N``, stored as base-p digits."""

    config: SpaceConfig
    N: int
    K: int
    digits: tuple

    def __post_init__(self):
        L = self.N + self.K
        if L < 1:
            raise ValidationError(f"resolution K={self.K} must satisfy K >= -N+1 (N={self.N})")
        digits = tuple(tuple(int(d) for d in row) for row in self.digits)
        if len(digits) != self.config.n:
            raise ValidationError(f"expected {self.config.n} coordinates, got {len(digits)}")
        for row in digits:
            if len(row) != L:
                raise ValidationError(f"each coordinate needs {L} digits, got {len(row)}")
            if any(d < 0 or d >= self.config.p for d in row):
                raise ValidationError(f"digit out of range 0..{self.config.p - 1}: {row}")
        object.__setattr__(self, "digits", digits)

    @property
    def L(self) -> int:
        return self.N + self.K

    @classmethod
    def zero(cls, config: SpaceConfig, N: int, K: int) -> PAdicPoint:
        return cls(config, N, K, ((0,) * (N + K),) * config.n)

    @classmethod
    def from_integers(cls, config: SpaceConfig, N: int, K: int, coords: Sequence[int]) -> PAdicPoint:
        """Point whose coordinate ``i`` is ``coords[i] * p^(-N)`` (taken mod ``p^(N+K)``)."""
        p, L = config.p, N + K
        digits = []
        for A in coords:
            A = int(A) % p ** L
            digits.append(tuple((A // p ** m) % p for m in range(L)))
        return cls(config, N, K, tuple(digits))

    @classmethod
    def from_rationals(cls, config: SpaceConfig, N: int, K: int, values: Sequence) -> PAdicPoint:
        """Embed rationals with ``|value|_p <= p^N`` into ``B_N`` at resolution ``p^-K``."""
        p, L = config.p, N + K
        mod = p ** L
        coords = []
        for v in values:
            v = Fraction(v) * Fraction(p) ** N
            num, den = v.numerator, v.denominator
            if den % p == 0:
                raise ValidationError(f"{values} does not lie in the ball of radius p^{N}")
            coords.append(num * pow(den, -1, mod) % mod)
        return cls.from_integers(config, N, K, coords)

    @cached_property
    def coordinate_integers(self) -> tuple:
        p = self.config.p
        return tuple(sum(d * p ** m for m, d in enumerate(row)) for row in self.digits)

    def coordinate_norm_exponents(self) -> tuple:
        p = self.config.p
        return tuple(_coordinate_norm_exponent(A, p, self.N, self.L) for A in self.coordinate_integers)

    def norm_exponent(self):
        return max(self.coordinate_norm_exponents())

    def _check_compatible(self, other: PAdicPoint):
        if (self.config, self.N, self.K) != (other.config, other.N, other.K):
            raise ValidationError(
                "points live on different grids: "
                f"{(self.config, self.N, self.K)} vs {(other.config, other.N, other.K)}")

    def __add__(self, other: PAdicPoint) -> PAdicPoint:
        return add(self, other)

    def __neg__(self) -> PAdicPoint:
        return neg(self)

    def __sub__(self, other: PAdicPoint) -> PAdicPoint:
        return sub(self, other)


def norm_exponent(x: PAdicPoint):
    return x.norm_exponent()


def add(x: PAdicPoint, y: PAdicPoint) -> PAdicPoint:
    x._check_compatible(y)
    coords = [a + b for a, b in zip(x.coordinate_integers, y.coordinate_integers)]
    return PAdicPoint.from_integers(x.config, x.N, x.K, coords)


def neg(x: PAdicPoint) -> PAdicPoint:
    return PAdicPoint.from_integers(x.config, x.N, x.K, [-a for a in x.coordinate_integers])


def sub(x: PAdicPoint, y: PAdicPoint) -> PAdicPoint:
    return add(x, neg(y))


def fractional_part(s: PAdicPoint, coordinate: int = 0) -> Fraction:
    """``{s_i}_p`` of one coordinate, as an exact fraction in ``[0, 1)``."""
    p, N, K = s.config.p, s.N, s.K
    if N <= 0:
        return Fraction(0)
    if K < 0:
        raise InsufficientPrecision(
            f"fractional part needs all digits down to p^-1, but resolution is p^{-K}")
    A = s.coordinate_integers[coordinate]
    return Fraction(A % p ** N, p ** N)


def character(z: PAdicPoint, x: PAdicPoint) -> complex:
    """``chi(z.x) = exp(2 pi i sum_i {z_i x_i}_p)``.

    Raises InsufficientPrecision unless the truncations of ``z`` and ``x``
    provably determine every fractional digit of each product ``z_i x_i``.
    """
    if z.config != x.config:
        raise ValidationError("z and x must share (p, n)")
    p = z.config.p
    total = Fraction(0)
    trivial = True
    for i, (ez, ex) in enumerate(zip(z.coordinate_norm_exponents(), x.coordinate_norm_exponents())):
        # product = (z~ + e_z)(x~ + e_x); each error term must have norm <= 1
        bound = -(z.K + x.K)
        if ez is not BELOW_RESOLUTION:
            bound = max(bound, ez - x.K)
        if ex is not BELOW_RESOLUTION:
            bound = max(bound, ex - z.K)
        if bound > 0:
            raise InsufficientPrecision(
                f"coordinate {i}: truncation error of z*x has norm up to p^{bound} > 1; "
                "refine the resolution of z or x")
        if ez is BELOW_RESOLUTION or ex is BELOW_RESOLUTION or ez + ex <= 0:
            continue
        trivial = False
        shift = z.N + x.N
        prod = z.coordinate_integers[i] * x.coordinate_integers[i]
        total += Fraction(prod % p ** shift, p ** shift)
    total -= math.floor(total)
    if trivial or total == 0:
        return 1.0 + 0.0j
    return cmath.exp(2j * math.pi * float(total))


@dataclass(frozen=True)
class CellGrid:
    """The ``p^(n(N+K))`` cells of ``B_N`` at resolution ``p^-K``."""

    config: SpaceConfig
    N: int
    K: int

    def __post_init__(self):
        if self.N + self.K < 1:
            raise ValidationError(
                f"resolution_K: need K >= -N+1, got N={self.N}, K={self.K}")

    @property
    def L(self) -> int:
        return self.N + self.K

    @property
    def q(self) -> int:
        return self.config.q

    @property
    def size(self) -> int:
        return self.q ** self.L

    @property
    def cell_measure(self) -> Fraction:
        return haar_ball(-self.K, self.config)

    def _check_int64(self):
        if self.config.p ** (2 * self.L) >= 2 ** 62 or self.size >= 2 ** 62:
            raise ValidationError(f"grid with L={self.L} is too large for int64 indexing")

    # -- scalar conversions -------------------------------------------------
    def point(self, index: int) -> PAdicPoint:
        d = self.digits(np.array([index]))[0]
        return PAdicPoint(self.config, self.N, self.K, tuple(map(tuple, d.tolist())))

    def index(self, x: PAdicPoint) -> int:
        if (x.config, x.N, x.K) != (self.config, self.N, self.K):
            raise ValidationError("point does not belong to this grid")
        return int(self.from_coords(np.array([x.coordinate_integers], dtype=np.int64))[0])

    # -- vectorised conversions ---------------------------------------------
    def digits(self, idx) -> np.ndarray:
        """Digit array of shape ``(len(idx), n, L)``."""
        self._check_int64()
        idx = np.asarray(idx, dtype=np.int64)
        p, n, q, L = self.config.p, self.config.n, self.q, self.L
        out = np.empty(idx.shape + (n, L), dtype=np.int64)
        for m in range(L):
            s = (idx // q ** (L - 1 - m)) % q
            for i in range(n):
                out[..., i, m] = (s // p ** (n - 1 - i)) % p
        return out

    def coords(self, idx) -> np.ndarray:
        """Coordinate integers ``A`` (point = ``A * p^-N``), shape ``(len(idx), n)``."""
        d = self.digits(idx)
        p = self.config.p
        weights = p ** np.arange(self.L, dtype=np.int64)
        return d @ weights

    def from_coords(self, A) -> np.ndarray:
        self._check_int64()
        A = np.asarray(A, dtype=np.int64) % self.config.p ** self.L
        p, n, q, L = self.config.p, self.config.n, self.q, self.L
        idx = np.zeros(A.shape[:-1], dtype=np.int64)
        for m in range(L):
            s = np.zeros_like(idx)
            for i in range(n):
                s = s * p + (A[..., i] // p ** m) % p
            idx = idx * q + s
        return idx

    def add_cells(self, a, b) -> np.ndarray:
        return self.from_coords(self.coords(a) + self.coords(b))

    def levels(self, a, b) -> np.ndarray:
        """Smallest block level shared by cells ``a`` and ``b`` (0 iff ``a == b``)."""
        a = np.asarray(a, dtype=np.int64)
        b = np.asarray(b, dtype=np.int64)
        level = np.full(np.broadcast(a, b).shape, self.L, dtype=np.int64)
        for ell in range(self.L - 1, -1, -1):
            block = self.q ** ell
            level = np.where(a // block == b // block, ell, level)
        return level

    def level_matrix(self) -> np.ndarray:
        idx = np.arange(self.size, dtype=np.int64)
        return self.levels(idx[:, None], idx[None, :])

    def norm_levels(self, idx=None) -> np.ndarray:
        """Level of each cell relative to the origin cell; norm is ``p^(level-K)``."""
        if idx is None:
            idx = np.arange(self.size, dtype=np.int64)
        return self.levels(idx, 0)

    def distance(self, a: int, b: int):
        """Exponent ``d`` with ``||x_a - x_b|| = p^d``; BELOW_RESOLUTION when ``a == b``."""
        if a == b:
            return BELOW_RESOLUTION
        return int(self.levels(a, b)) - self.K

    def characters(self, z: PAdicPoint, idx=None) -> np.ndarray:
        """``chi(z.x_c)`` for every cell representative ``x_c`` (vectorised)."""
        if z.config != self.config:
            raise ValidationError("z must share (p, n) with the grid")
        if idx is None:
            idx = np.arange(self.size, dtype=np.int64)
        p = self.config.p
        ez_list = z.coordinate_norm_exponents()
        for i, ez in enumerate(ez_list):
            bound = max(-(z.K + self.K), self.N - z.K)
            if ez is not BELOW_RESOLUTION:
                bound = max(bound, ez - self.K)
            if bound > 0:
                raise InsufficientPrecision(
                    f"coordinate {i}: z needs ||z|| <= p^{self.K} and resolution >= p^-{self.N}")
        A = self.coords(idx)
        shift = z.N + self.N
        phase = np.zeros(len(idx), dtype=object if p ** (2 * shift) >= 2 ** 62 else np.int64)
        if shift <= 0:
            return np.ones(len(idx), dtype=complex)
        mod = p ** shift
        for i, Az in enumerate(z.coordinate_integers):
            Ai = A[:, i].astype(phase.dtype)
            phase = (phase + (Az % mod) * Ai) % mod
        frac = np.asarray(phase, dtype=np.float64) / mod
        out = np.exp(2j * np.pi * frac)
        # quarter turns exactly, so real characters stay real
        quarter = (np.asarray(phase) * 4) % mod == 0
        if quarter.any():
            k = (np.asarray(phase)[quarter] * 4 // mod).astype(np.int64)
            out[quarter] = np.array([1.0, 1j, -1.0, -1j])[k]
        return out


def cell_distance(a: int, b: int, grid: CellGrid):
    return grid.distance(a, b)
