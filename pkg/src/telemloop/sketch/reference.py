"""Plain single-dimension universal sketch.

A straightforward scalar implementation (Python ints, one hash call at a
time) kept as the golden model for the merged sketch: a merged sketch
with one dimension and no sampling must end in exactly this state. It
uses the same seed expansion and the same tracker refresh cadence.
"""

from __future__ import annotations

import math

import numpy as np

from ..hashing import derive_seeds, hash_int
from .universal import ENTROPY, GsumKind, SketchGeometry


class UniversalSketch:
    def __init__(self, geometry: SketchGeometry, salt: int = 0, refresh_every: int = 1024):
        g = geometry
        self.geometry = g
        self.salt = salt
        self.refresh_every = refresh_every
        seeds = derive_seeds(g.seed, g.levels + 2 * g.levels * g.rows)
        self.level_seeds = seeds[: g.levels]
        self.bucket_seeds = seeds[g.levels : g.levels + g.levels * g.rows]
        self.sign_seeds = seeds[g.levels + g.levels * g.rows :]
        self.shift = 64 - (g.width.bit_length() - 1)
        self.counters = [[[0] * g.width for _ in range(g.rows)] for _ in range(g.levels)]
        self.trackers: list[list[tuple[int, int]]] = [[] for _ in range(g.levels)]
        self.pending: list[set[int]] = [set() for _ in range(g.levels)]
        self.m = 0
        self.records = 0

    def _cell(self, level: int, row: int, comp: int) -> tuple[int, int]:
        i = level * self.geometry.rows + row
        b = hash_int(comp, self.bucket_seeds[i]) >> self.shift
        s = 1 - 2 * (hash_int(comp, self.sign_seeds[i]) & 1)
        return b, s

    def _in_level(self, comp: int, level: int) -> bool:
        return hash_int(comp, self.level_seeds[level]) >> 63 == 1

    def update(self, key: int, weight: int = 1) -> None:
        comp = key ^ self.salt
        level = 0
        while True:
            for row in range(self.geometry.rows):
                b, s = self._cell(level, row, comp)
                self.counters[level][row][b] += s * weight
            self.pending[level].add(key)
            level += 1
            if level >= self.geometry.levels or not self._in_level(comp, level):
                break
        self.m += weight
        self.records += 1
        if self.records % self.refresh_every == 0:
            self.flush()

    def estimate(self, key: int, level: int = 0) -> int:
        comp = key ^ self.salt
        vals = []
        for row in range(self.geometry.rows):
            b, s = self._cell(level, row, comp)
            vals.append(s * self.counters[level][row][b])
        vals.sort()
        mid = len(vals) // 2
        return vals[mid] if len(vals) % 2 else (vals[mid - 1] + vals[mid]) // 2

    def flush(self) -> None:
        for level in range(self.geometry.levels):
            if not self.pending[level]:
                continue
            cand = self.pending[level] | {k for k, _ in self.trackers[level]}
            self.pending[level] = set()
            ranked = sorted(((-self.estimate(k, level), k) for k in cand))[: self.geometry.capacity]
            self.trackers[level] = [(k, -neg) for neg, k in ranked]

    def gsum(self, kind: GsumKind) -> float:
        if self.m == 0:
            return 0.0
        self.flush()
        top = self.geometry.levels - 1
        y = 0.0
        for level in range(top, -1, -1):
            entries = self.trackers[level]
            vals = kind.g(np.array([e for _, e in entries], dtype=np.int64))
            if level == top:
                y = float(vals.sum())
                continue
            keep = np.array([self._in_level(k ^ self.salt, level + 1) for k, _ in entries], dtype=bool)
            y = 2.0 * y + float(((1.0 - 2.0 * keep) * vals).sum())
        return max(y, 0.0)

    def entropy(self) -> float:
        if self.m <= 0:
            raise ValueError("entropy of an empty stream")
        top = math.log2(self.m)
        return min(max(top - self.gsum(ENTROPY) / self.m, 0.0), top)
