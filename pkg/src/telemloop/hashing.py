"""Seeded 64-bit mixing used for every hash family in the package.

All hashes are the splitmix64 finalizer applied to ``key ^ seed``. The
scalar and vectorized paths are bit-identical; the scalar one is used by
the reference sketch and by per-key queries, the numpy one by batch
updates.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB

_NP_M1 = np.uint64(_M1)
_NP_M2 = np.uint64(_M2)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)


def mix64(x: int) -> int:
    z = x & MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def splitmix64(x: int) -> int:
    return mix64((x + GAMMA) & MASK64)


def mix64_array(x: np.ndarray) -> np.ndarray:
    z = np.asarray(x, dtype=np.uint64)
    z = (z ^ (z >> _S30)) * _NP_M1
    z = (z ^ (z >> _S27)) * _NP_M2
    return z ^ (z >> _S31)


def derive_seeds(master: int, count: int, offset: int = 0) -> list[int]:
    """Counter-mode expansion of a master seed into ``count`` sub-seeds."""
    return [splitmix64((master + (offset + i + 1) * GAMMA) & MASK64) for i in range(count)]


def named_seed(master: int, name: str) -> int:
    """Stable sub-seed for a named component (workload, sketch, sampling...)."""
    acc = master & MASK64
    for byte in name.encode("utf-8"):
        acc = splitmix64(acc ^ byte)
    return acc


def dim_salt(dim: int) -> int:
    return splitmix64(dim + 1)


def hash_int(key: int, seed: int) -> int:
    return mix64(key ^ seed)


def hash_array(keys: np.ndarray, seed) -> np.ndarray:
    """Hash ``keys`` with a scalar seed or an elementwise seed array."""
    return mix64_array(np.asarray(keys, dtype=np.uint64) ^ np.asarray(seed, dtype=np.uint64))
