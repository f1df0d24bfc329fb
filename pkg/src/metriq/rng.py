"""SplitMix64 random stream.

The generator is fully specified so that any implementation can reproduce
the same draws bit for bit:

    state_k = seed + k * 0x9E3779B97F4A7C15            (mod 2**64, k = 1, 2, ...)
    z = state_k
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9           (mod 2**64)
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB           (mod 2**64)
    out_k = z ^ (z >> 31)

Uniforms on the open interval (0, 1) are ``((out >> 11) + 0.5) / 2**53``.
Normals use one Box-Muller branch on two consecutive uniforms,
``sqrt(-2 ln u1) * cos(2 pi u2)``.  Bounded integers are ``(out * n) >> 64``.
"""

from __future__ import annotations

import math

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
TWO_POW_M53 = 2.0 ** -53


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * MIX1) & MASK64
    z = ((z ^ (z >> 27)) * MIX2) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, *keys: int) -> int:
    """Independent sub-stream seed for ``(seed, key1, key2, ...)``."""
    h = mix64(seed & MASK64)
    for k in keys:
        h = mix64(h ^ mix64((k + GAMMA) & MASK64))
    return h


def _mix64_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(MIX2)
    return z ^ (z >> np.uint64(31))


class SplitMix64:
    def __init__(self, seed: int):
        self.state = int(seed) & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GAMMA) & MASK64
        return mix64(self.state)

    def uniform(self) -> float:
        return ((self.next_u64() >> 11) + 0.5) * TWO_POW_M53

    def normal(self) -> float:
        u1 = self.uniform()
        u2 = self.uniform()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def below(self, n: int) -> int:
        return (self.next_u64() * n) >> 64

    def u64_array(self, n: int) -> np.ndarray:
        k = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            states = np.uint64(self.state) + k * np.uint64(GAMMA)
            out = _mix64_array(states)
        self.state = (self.state + n * GAMMA) & MASK64
        return out

    def uniforms(self, n: int) -> np.ndarray:
        """Next ``n`` uniforms; identical to ``n`` calls of :meth:`uniform`."""
        bits = self.u64_array(n) >> np.uint64(11)
        return (bits.astype(np.float64) + 0.5) * TWO_POW_M53

    def shuffle(self, items: list) -> list:
        """Fisher-Yates, from the last position down."""
        out = list(items)
        for i in range(len(out) - 1, 0, -1):
            j = self.below(i + 1)
            out[i], out[j] = out[j], out[i]
        return out
