"""Deterministic random streams used everywhere in the testbed.

All randomness flows through SplitMix64 (Steele/Lea/Flood's splittable
64-bit generator): a stream is a 64-bit state advanced by the golden-gamma
increment, with the output finalizer applied per draw.  Stream keys are
derived by folding integer parts through the same finalizer, so any
(domain, seed, index...) tuple names one reproducible stream.  Golden
files and logs produced under this scheme are portable across machines;
bit-compatibility with other RNGs is not a goal.

Normals use the Box–Muller transform on two uniform draws (the second
member of the pair is discarded so each call is position-independent).
A numpy-vectorized twin of the scalar path exists for bulk statistical
checks and is asserted equivalent in the test suite.
"""

from __future__ import annotations

import math

import numpy as np

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15

# Stream domains.  Each top-level consumer folds its own tag first so
# streams never collide across subsystems.
DOMAIN_TASK = 0x01
DOMAIN_NOISE = 0x02
DOMAIN_AGENT = 0x03
DOMAIN_EVAL = 0x04
DOMAIN_ES = 0x05
DOMAIN_SIM_SEED = 0x06
DOMAIN_TEST = 0x07


def mix64(z: int) -> int:
    """SplitMix64 output finalizer (murmur-style avalanche)."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_key(*parts: int) -> int:
    """Fold integer parts into one 64-bit stream key.

    Negative parts are reduced mod 2^64 so scenario files may carry any
    64-bit integer seed.
    """
    acc = 0x243F6A8885A308D3
    for p in parts:
        acc = mix64((acc + _GAMMA) ^ mix64(p & _MASK))
    return acc


class Stream:
    """One SplitMix64 stream; cheap to create, safe to discard."""

    __slots__ = ("state",)

    def __init__(self, key: int):
        self.state = key & _MASK

    def u64(self) -> int:
        self.state = (self.state + _GAMMA) & _MASK
        return mix64(self.state)

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        # 53-bit mantissa in [0, 1)
        return lo + (hi - lo) * ((self.u64() >> 11) * 2.0**-53)

    def normal(self, mu: float = 0.0, sigma: float = 1.0) -> float:
        # Box–Muller; u1 in (0, 1] so the log is always finite.
        u1 = ((self.u64() >> 11) + 1) * 2.0**-53
        u2 = (self.u64() >> 11) * 2.0**-53
        return mu + sigma * math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def randrange(self, n: int) -> int:
        # Modulo bias is < n / 2^64, negligible for the grid sizes used here.
        if n <= 0:
            raise ValueError("randrange needs n >= 1")
        return self.u64() % n

    def choice(self, seq):
        return seq[self.randrange(len(seq))]

    def normals(self, n: int) -> np.ndarray:
        return np.array([self.normal() for _ in range(n)], dtype=float)


# Vectorized twin (numpy uint64 arithmetic wraps exactly like the scalar path).


def _mix64_vec(z: np.ndarray) -> np.ndarray:
    z = z.astype(np.uint64, copy=True)
    z ^= z >> np.uint64(30)
    z *= np.uint64(0xBF58476D1CE4E5B9)
    z ^= z >> np.uint64(27)
    z *= np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def derive_key_vec(prefix: tuple[int, ...], parts: np.ndarray) -> np.ndarray:
    """Vectorized derive_key(*prefix, p) for every p in parts."""
    acc = 0x243F6A8885A308D3
    for p in prefix:
        acc = mix64((acc + _GAMMA) ^ mix64(p & _MASK))
    accv = np.full(parts.shape, acc, dtype=np.uint64)
    mixed = _mix64_vec(parts.astype(np.uint64))
    return _mix64_vec((accv + np.uint64(_GAMMA)) ^ mixed)


def first_normal_vec(keys: np.ndarray) -> np.ndarray:
    """First Stream(key).normal() draw for every key, vectorized."""
    s1 = (keys.astype(np.uint64) + np.uint64(_GAMMA)).astype(np.uint64)
    u64_1 = _mix64_vec(s1)
    s2 = (s1 + np.uint64(_GAMMA)).astype(np.uint64)
    u64_2 = _mix64_vec(s2)
    u1 = ((u64_1 >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53
    u2 = (u64_2 >> np.uint64(11)).astype(np.float64) * 2.0**-53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
