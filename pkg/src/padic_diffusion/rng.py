"""Stateless counter-based random numbers (Philox4x32-10), vectorised over counters.

A draw is a pure function of ``(seed, stream, path, event)``, so any path can
be regenerated alone and the result never depends on how paths are split
between threads.
"""

from __future__ import annotations

import numpy as np

M0 = np.uint64(0xD2511F53)
M1 = np.uint64(0xCD9E8D57)
W0 = np.uint32(0x9E3779B9)
W1 = np.uint32(0xBB67AE85)
MASK32 = np.uint64(0xFFFFFFFF)
ROUNDS = 10

STREAM_SMALL = 0
STREAM_LARGE = 1


def _mulhilo(m: np.uint64, x: np.ndarray):
    prod = m * x.astype(np.uint64)
    return (prod & MASK32).astype(np.uint32), (prod >> np.uint64(32)).astype(np.uint32)


def philox4x32(counter, key) -> np.ndarray:
    """Philox4x32-10 block function.

    ``counter`` has shape ``(4, m)`` (or ``(4,)``), ``key`` shape ``(2,)`` or ``(2, m)``;
    both uint32.  Returns the ``(4, m)`` output words.
    """
    c = np.asarray(counter, dtype=np.uint32)
    single = c.ndim == 1
    if single:
        c = c[:, None]
    c0, c1, c2, c3 = (c[i].copy() for i in range(4))
    k = np.asarray(key, dtype=np.uint32)
    k0 = np.broadcast_to(k[0], c0.shape).copy()
    k1 = np.broadcast_to(k[1], c0.shape).copy()
    with np.errstate(over="ignore"):
        for r in range(ROUNDS):
            if r:
                k0 += W0
                k1 += W1
            lo0, hi0 = _mulhilo(M0, c0)
            lo1, hi1 = _mulhilo(M1, c2)
            c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    out = np.stack([c0, c1, c2, c3])
    return out[:, 0] if single else out


def seed_key(seed: int) -> np.ndarray:
    seed = int(seed)
    if not 0 <= seed < 2 ** 64:
        raise ValueError(f"seed must be in [0, 2^64), got {seed}")
    return np.array([seed & 0xFFFFFFFF, seed >> 32], dtype=np.uint32)


def _to_unit(hi: np.ndarray, lo: np.ndarray) -> np.ndarray:
    """53-bit uniform in the open interval (0, 1) from two words."""
    a = (hi >> np.uint32(5)).astype(np.float64)
    b = (lo >> np.uint32(6)).astype(np.float64)
    return (a * 67108864.0 + b + 0.5) / 9007199254740992.0


def uniforms(seed: int, stream: int, paths, event) -> np.ndarray:
    """Four independent uniforms per path for one event, shape ``(4, len(paths))``.

    ``event`` may be a scalar or an array aligned with ``paths``.
    """
    paths = np.asarray(paths, dtype=np.uint64)
    event = np.broadcast_to(np.asarray(event, dtype=np.uint64), paths.shape)
    key = seed_key(seed)
    p_lo = (paths & MASK32).astype(np.uint32)
    p_hi = (paths >> np.uint64(32)).astype(np.uint32)
    stream_w = np.full(paths.shape, stream, dtype=np.uint32)
    words = []
    for sub in (0, 1):
        ctr_event = (event * np.uint64(2) + np.uint64(sub)) & MASK32
        ctr = np.stack([ctr_event.astype(np.uint32), stream_w, p_lo, p_hi])
        words.append(philox4x32(ctr, key))
    w0, w1 = words
    return np.stack([_to_unit(w0[0], w0[1]), _to_unit(w0[2], w0[3]),
                     _to_unit(w1[0], w1[1]), _to_unit(w1[2], w1[3])])
