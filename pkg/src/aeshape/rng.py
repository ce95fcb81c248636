"""Portable counter-based random numbers.

Draw ``i`` of a stream is ``splitmix64(key + (i + 1) * GOLDEN)`` where the key
mixes the seed with an FNV-1a hash of the stream name. Everything is 64-bit
unsigned integer arithmetic, so the integer stream is identical on every
platform; floats are derived with explicit bit manipulation and Box-Muller.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


def _mix(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & _MASK
    return h


def stream_key(seed: int, stream: str) -> int:
    base = np.array([(int(seed) & _MASK) ^ fnv1a64(stream)], dtype=np.uint64)
    return int(_mix(base + _GOLDEN)[0])


class CounterRNG:
    """Sequential reader over one counter-based stream."""

    def __init__(self, seed: int, stream: str = ""):
        self.seed = int(seed)
        self.stream = stream
        self.key = np.uint64(stream_key(seed, stream))
        self.counter = 0

    def uint64(self, n: int) -> np.ndarray:
        idx = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            return _mix(self.key + idx * _GOLDEN)

    def uniform(self, n: int) -> np.ndarray:
        """Floats in [0, 1) with 53 random bits."""
        return (self.uint64(n) >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)

    def normal(self, n: int) -> np.ndarray:
        m = (n + 1) // 2
        u1 = 1.0 - self.uniform(m)  # (0, 1], keeps log finite
        u2 = self.uniform(m)
        rad = np.sqrt(-2.0 * np.log(u1))
        ang = 2.0 * np.pi * u2
        return np.concatenate([rad * np.cos(ang), rad * np.sin(ang)])[:n]

    def permutation(self, n: int) -> np.ndarray:
        return np.argsort(self.uint64(n), kind="stable")
