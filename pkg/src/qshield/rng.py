"""Deterministic PRNG used everywhere randomness is needed.

The generator is SplitMix64. Given a 64-bit state s, one draw is

    s      = (s + 0x9E3779B97F4A7C15) mod 2^64
    z      = s
    z      = ((z XOR (z >> 30)) * 0xBF58476D1CE4E5B9) mod 2^64
    z      = ((z XOR (z >> 27)) * 0x94D049BB133111EB) mod 2^64
    output = z XOR (z >> 31)

so the k-th output (1-based) is a pure function of seed + k*GAMMA. That makes
the stream reproducible in any language from these equations alone, and lets
numpy generate a block of draws that matches the scalar loop bit for bit.

Derived quantities and their stream layout:

  uniform      one draw, top 53 bits scaled into [0, 1)
  normals      Box-Muller on consecutive uniform pairs (u1, u2); a block of n
               normals consumes 2*ceil(n/2) draws, order z0 = r cos, z1 = r sin
  randbelow    rejection sampling on whole draws (unbiased)
  shuffle      Fisher-Yates from the top index down, one randbelow per swap

derive(seed, tag) produces independent child seeds by hashing the tag with FNV-1a 64
and pushing seed XOR hash through one SplitMix64 draw.
"""

from __future__ import annotations

import numpy as np

GAMMA = 0x9E3779B97F4A7C15
MASK = (1 << 64) - 1

_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * _M1) & MASK
    z = ((z ^ (z >> 27)) * _M2) & MASK
    return z ^ (z >> 31)


def _fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for byte in data:
        h ^= byte
        h = (h * 0x100000001B3) & MASK
    return h


def derive(seed: int, tag: str) -> int:
    """Child seed for a named stream. Stable across runs and platforms."""
    s = (seed & MASK) ^ _fnv1a64(tag.encode("utf-8"))
    return _mix((s + GAMMA) & MASK)


class SplitMix64:
    """Scalar generator. Cheap to construct, no global state."""

    def __init__(self, seed: int):
        self.state = seed & MASK

    def u64(self) -> int:
        self.state = (self.state + GAMMA) & MASK
        return _mix(self.state)

    def uniform(self) -> float:
        return (self.u64() >> 11) * (2.0 ** -53)

    def randbelow(self, n: int) -> int:
        if n <= 0:
            raise ValueError("randbelow needs n >= 1")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            u = self.u64()
            if u < limit:
                return u % n

    def shuffle(self, items) -> None:
        """In-place Fisher-Yates on a mutable sequence or 1-d array."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]


def _bulk_u64(seed: int, offset: int, count: int) -> np.ndarray:
    """Outputs offset+1 .. offset+count of the stream, vectorized."""
    with np.errstate(over="ignore"):
        k = np.arange(offset + 1, offset + count + 1, dtype=np.uint64)
        z = np.uint64(seed & MASK) + k * np.uint64(GAMMA)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
        return z ^ (z >> np.uint64(31))


def uniform_array(seed: int, shape, low: float = 0.0, high: float = 1.0) -> np.ndarray:
    """Uniform [low, high) block, identical to repeated SplitMix64.uniform."""
    n = int(np.prod(shape)) if shape else 1
    u = (_bulk_u64(seed, 0, n) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)
    return (low + (high - low) * u).reshape(shape)


def normal_array(seed: int, shape) -> np.ndarray:
    """Standard normal block via Box-Muller on uniform pairs."""
    n = int(np.prod(shape)) if shape else 1
    pairs = (n + 1) // 2
    u = (_bulk_u64(seed, 0, 2 * pairs) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)
    u1 = u[0::2]
    u2 = u[1::2]
    # Guard the log: u1 == 0 happens once per 2^53 draws but would poison a run.
    r = np.sqrt(-2.0 * np.log(np.maximum(u1, 2.0 ** -53)))
    theta = 2.0 * np.pi * u2
    z = np.empty(2 * pairs)
    z[0::2] = r * np.cos(theta)
    z[1::2] = r * np.sin(theta)
    return z[:n].reshape(shape)


def permutation(n: int, seed: int) -> np.ndarray:
    """Seeded permutation of range(n) via Fisher-Yates."""
    idx = np.arange(n)
    gen = SplitMix64(seed)
    for i in range(n - 1, 0, -1):
        j = gen.randbelow(i + 1)
        idx[i], idx[j] = idx[j], idx[i]
    return idx
