"""Portable random streams.

Fold assignment must be reproducible across implementations, so it uses
SplitMix64 (Steele, Lea & Flood, 2014) rather than numpy's generators.
Everything else that only needs in-process determinism (permutation
shuffles, Gaussian noise) draws from ``numpy.random.Generator`` seeded
through :func:`derive_seed`.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class SplitMix64:
    """SplitMix64 generator with 64-bit state.

    ``next_u64`` advances the state by the golden gamma and returns the
    mixed output; ``next_float`` takes the top 53 bits as a double in [0, 1).
    """

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + _GOLDEN_GAMMA) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
        return z ^ (z >> 31)

    def next_float(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def below(self, bound: int) -> int:
        """Integer in ``[0, bound)`` as ``floor(next_float() * bound)``."""
        return int(self.next_float() * bound)

    def shuffle(self, items: list) -> list:
        """Fisher-Yates, walking i from the end; returns a new list."""
        out = list(items)
        for i in range(len(out) - 1, 0, -1):
            j = self.below(i + 1)
            out[i], out[j] = out[j], out[i]
        return out


def derive_seed(seed: int, component: str, iteration: int = 0) -> int:
    """Child seed = first 8 bytes (big-endian) of SHA-256("seed:component:iteration")."""
    digest = hashlib.sha256(f"{seed}:{component}:{iteration}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def numpy_rng(seed: int, component: str, iteration: int = 0) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, component, iteration))
