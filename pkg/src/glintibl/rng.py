"""Stateless counter-based random numbers.

Every uniform is a pure function of a 64-bit seed and a tuple of integer
stream coordinates, so results never depend on evaluation order or on how
work is split between threads.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_INV_2_32 = 1.0 / 4294967296.0


def _as_u64(x) -> np.ndarray:
    a = np.asarray(x)
    if a.dtype == np.uint64:
        return a
    # negative coordinates wrap two's-complement style
    return a.astype(np.int64).view(np.uint64)


def mix64(x: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer (full avalanche on 64-bit words)."""
    x = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        x = x ^ (x >> np.uint64(30))
        x = x * _M1
        x = x ^ (x >> np.uint64(27))
        x = x * _M2
        x = x ^ (x >> np.uint64(31))
    return x


def hash_indices(seed, *indices) -> np.ndarray:
    """Hash a seed and any number of (broadcastable) integer coordinates."""
    with np.errstate(over="ignore"):
        h = mix64(_as_u64(seed) + _GOLDEN)
        for idx in indices:
            h = mix64(h ^ mix64(_as_u64(idx) + _GOLDEN))
    return h


def uniform(seed, *indices) -> np.ndarray:
    """Uniform values in [0, 1) with 32 bits of resolution."""
    h = hash_indices(seed, *indices)
    return (h >> np.uint64(32)).astype(np.float64) * _INV_2_32


@dataclass(frozen=True)
class RandomStream:
    """A seeded family of uniforms addressed by stream coordinates.

    ``RandomStream(7).uniform(vertex, node, 0)`` always returns the same value
    for the same arguments; arguments broadcast like numpy arrays.
    """

    seed: int = 0

    def uniform(self, *indices) -> np.ndarray:
        return uniform(np.uint64(self.seed & 0xFFFFFFFFFFFFFFFF), *indices)

    def hash(self, *indices) -> np.ndarray:
        return hash_indices(np.uint64(self.seed & 0xFFFFFFFFFFFFFFFF), *indices)

    def child(self, *indices) -> "RandomStream":
        """Derive an independent stream (e.g. one per realization)."""
        return RandomStream(int(self.hash(*indices)))
