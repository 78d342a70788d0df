"""Merged multidimensional universal sketch.

One count-sketch table per level is shared by every dimension. A key in
dimension ``dim`` is hashed as the composite ``key ^ dim_salt(dim)``, so
dimensions follow independent hash trajectories through the same
counters. Level ``j`` keeps the composites for which the level hashes
``g_1 .. g_j`` all return 1.

Updates are applied record-at-a-time semantics but batch-vectorized. With
sampling probability ``p < 1`` each row keeps a geometric skip counter and
a record either touches a row for all of its dimensions or for none of
them; selected updates carry weight ``round(w / p)``.

Heavy-hitter trackers are bounded top-``k`` maps per (dimension, level).
Offers are buffered and resolved lazily: every ``refresh_every`` records
and before any read, the tracked keys plus the buffered candidates are
re-estimated from the level table and the top ``k`` (ties broken by the
smaller key) are kept.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ..errors import DomainError, GeometryMismatch
from ..hashing import derive_seeds, dim_salt, hash_array, named_seed
from .countsketch import CountSketch, diff_l2 as _table_diff_l2


@dataclass(frozen=True)
class SketchGeometry:
    rows: int = 5
    width: int = 2048
    levels: int = 16
    dims: int = 1
    capacity: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.rows < 1:
            raise ValueError("rows must be >= 1")
        if self.width < 2 or self.width & (self.width - 1):
            raise ValueError("width must be a power of two >= 2")
        if not 1 <= self.levels <= 64:
            raise ValueError("levels must be in [1, 64]")
        if self.dims < 1:
            raise ValueError("dims must be >= 1")
        if self.capacity < 1:
            raise ValueError("capacity must be >= 1")
        if not 0 <= self.seed < 1 << 64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def counter_bytes(self) -> int:
        return self.levels * self.rows * self.width * 8

    def memory_bytes(self) -> int:
        """Counters, full trackers (key + estimate) and stream lengths."""
        return self.counter_bytes() + self.dims * self.levels * self.capacity * 16 + self.dims * 8


@dataclass(frozen=True)
class GsumKind:
    tag: str
    order: int = 0

    def __post_init__(self):
        if self.tag not in ("cardinality", "entropy", "l2", "moment"):
            raise ValueError(f"unknown G-sum kind {self.tag!r}")
        if self.tag == "moment" and self.order < 0:
            raise ValueError("moment order must be non-negative")

    def g(self, freqs: np.ndarray) -> np.ndarray:
        """Item-wise function on estimated frequencies clamped below at 1."""
        x = np.maximum(np.asarray(freqs, dtype=np.float64), 1.0)
        if self.tag == "cardinality":
            return np.ones_like(x)
        if self.tag == "entropy":
            return x * np.log2(x)
        if self.tag == "l2":
            return x * x
        return x**self.order


CARDINALITY = GsumKind("cardinality")
ENTROPY = GsumKind("entropy")
L2 = GsumKind("l2")


def moment(order: int) -> GsumKind:
    return GsumKind("moment", order)


class Tracker:
    """Top-``k`` keys at one (dimension, level) with their last estimates."""

    __slots__ = ("keys", "est", "nxt")

    def __init__(self):
        self.keys = np.zeros(0, dtype=np.uint64)
        self.est = np.zeros(0, dtype=np.int64)
        # whether the next level hash keeps the key (g_{j+1}(x) == 1)
        self.nxt = np.zeros(0, dtype=bool)

    def __len__(self):
        return len(self.keys)

    def items(self) -> list[tuple[int, int]]:
        return list(zip(self.keys.tolist(), self.est.tolist()))

    def same_as(self, other: "Tracker") -> bool:
        return (
            np.array_equal(self.keys, other.keys)
            and np.array_equal(self.est, other.est)
            and np.array_equal(self.nxt, other.nxt)
        )


class Sampler:
    """Per-row geometric skipping shared by all dimensions of a record."""

    _CHUNK = 256

    def __init__(self, p: float, rows: int, seed: int):
        if not 0.0 < p <= 1.0:
            raise ValueError(f"sampling probability must be in (0, 1], got {p}")
        self.p = float(p)
        self.rows = rows
        self.seed = seed
        self._rngs = [np.random.default_rng([seed & 0xFFFFFFFF, seed >> 32, r]) for r in range(rows)]
        self._buf = [np.zeros(0, dtype=np.int64) for _ in range(rows)]
        self.draws = 0
        self._next = [self._gap(r) - 1 for r in range(rows)]

    def _gap(self, row: int) -> int:
        gap = int(self._take(row, 1)[0])
        self._consume(row, 1)
        return gap

    def _take(self, row: int, limit: int) -> np.ndarray:
        if not len(self._buf[row]):
            self._buf[row] = self._rngs[row].geometric(self.p, self._CHUNK).astype(np.int64)
        gaps = self._buf[row][:limit]
        return gaps

    def _consume(self, row: int, count: int) -> None:
        self._buf[row] = self._buf[row][count:]
        self.draws += count

    def select(self, n: int) -> np.ndarray:
        """Boolean ``(n, rows)`` mask of the rows each of the next ``n`` records updates."""
        mask = np.zeros((n, self.rows), dtype=bool)
        for r in range(self.rows):
            pos = self._next[r]
            while pos < n:
                gaps = self._take(r, self._CHUNK)
                cand = pos + np.concatenate(([0], np.cumsum(gaps)))
                stop = int(np.searchsorted(cand, n, side="left"))
                if stop <= len(gaps):
                    mask[cand[:stop], r] = True
                    self._consume(r, stop)
                    pos = int(cand[stop])
                    break
                mask[cand[:-1], r] = True
                self._consume(r, len(gaps))
                pos = int(cand[-1])
            self._next[r] = pos - n
        return mask


class MergedUnivSketch:
    """Universal sketch whose level tables are shared across ``geometry.dims`` dimensions."""

    def __init__(
        self,
        geometry: SketchGeometry,
        p: float = 1.0,
        sampling_seed: int | None = None,
        refresh_every: int = 1024,
        _force_sampler: bool = False,
    ):
        if refresh_every < 1:
            raise ValueError("refresh_every must be >= 1")
        self.geometry = g = geometry
        self.p = float(p)
        self.refresh_every = refresh_every
        self.sampling_seed = named_seed(g.seed, "sampling") if sampling_seed is None else sampling_seed
        self.sampler = Sampler(p, g.rows, self.sampling_seed) if (p < 1.0 or _force_sampler) else None

        seeds = derive_seeds(g.seed, g.levels + 2 * g.levels * g.rows)
        self.level_seeds = seeds[: g.levels]
        bucket = seeds[g.levels : g.levels + g.levels * g.rows]
        sign = seeds[g.levels + g.levels * g.rows :]
        self.counters = np.zeros((g.levels, g.rows, g.width), dtype=np.int64)
        self.tables = [
            CountSketch(
                g.width,
                bucket[j * g.rows : (j + 1) * g.rows],
                sign[j * g.rows : (j + 1) * g.rows],
                counters=self.counters[j],
            )
            for j in range(g.levels)
        ]
        self.salts = [dim_salt(d) for d in range(g.dims)]
        self.trackers = [[Tracker() for _ in range(g.levels)] for _ in range(g.dims)]
        self._pending: list[list[list[np.ndarray]]] = [[[] for _ in range(g.levels)] for _ in range(g.dims)]
        self.m = [0] * g.dims
        self.records = 0
        self.level_hash_calls = 0
        self.query_level_hash_calls = 0

    # -- instrumentation -------------------------------------------------
    @property
    def row_hash_calls(self) -> int:
        return sum(t.hash_calls for t in self.tables)

    @property
    def hash_calls(self) -> int:
        """Hash invocations on the update path (row bucket/sign plus level hashes)."""
        return self.row_hash_calls + self.level_hash_calls

    @property
    def counter_updates(self) -> int:
        return sum(t.counter_updates for t in self.tables)

    @property
    def overflow(self) -> bool:
        return any(t.overflow for t in self.tables)

    def memory_bytes(self) -> int:
        return self.geometry.memory_bytes()

    # -- hashing helpers -------------------------------------------------
    def composite(self, dim: int, keys) -> np.ndarray:
        return np.asarray(keys, dtype=np.uint64) ^ np.uint64(self.salts[dim])

    def _depths(self, comp: np.ndarray, query: bool = False) -> np.ndarray:
        """Deepest level each composite reaches (level 0 holds everything)."""
        depth = np.zeros(len(comp), dtype=np.int64)
        alive = np.arange(len(comp))
        for j in range(1, self.geometry.levels):
            if not len(alive):
                break
            bit = hash_array(comp[alive], self.level_seeds[j]) >> np.uint64(63)
            if query:
                self.query_level_hash_calls += len(alive)
            else:
                self.level_hash_calls += len(alive)
            alive = alive[bit == 1]
            depth[alive] = j
        return depth

    def _next_bit(self, comp: np.ndarray, level: int) -> np.ndarray:
        if level + 1 >= self.geometry.levels:
            return np.zeros(len(comp), dtype=bool)
        self.query_level_hash_calls += len(comp)
        return (hash_array(comp, self.level_seeds[level + 1]) >> np.uint64(63)) == 1

    def _check_dim(self, dim: int) -> None:
        if not 0 <= dim < self.geometry.dims:
            raise IndexError(f"dimension {dim} outside [0, {self.geometry.dims})")

    # -- updates ---------------------------------------------------------
    def update(self, dim: int, key: int, weight: int = 1) -> None:
        """One record carrying a single dimension."""
        self.update_records([dim], np.array([[key]], dtype=np.uint64), np.array([weight], dtype=np.int64))

    def update_record(self, keys: dict[int, int], weight: int = 1) -> None:
        """One record carrying several dimensions; rows are sampled once for all of them."""
        dims = sorted(keys)
        self.update_records(dims, np.array([[keys[d] for d in dims]], dtype=np.uint64), np.array([weight]))

    def update_records(self, dims: Sequence[int], keys: np.ndarray, weights: np.ndarray | None = None) -> None:
        """Apply ``n`` records; ``keys[i, c]`` is record ``i``'s key in dimension ``dims[c]``."""
        dims = list(dims)
        for d in dims:
            self._check_dim(d)
        keys = np.asarray(keys, dtype=np.uint64).reshape(-1, len(dims)) if dims else np.zeros((0, 0), np.uint64)
        n = keys.shape[0]
        if weights is None:
            weights = np.ones(n, dtype=np.int64)
        weights = np.asarray(weights, dtype=np.int64)
        start = 0
        while start < n:
            room = self.refresh_every - self.records % self.refresh_every
            stop = min(n, start + room)
            self._apply_chunk(dims, keys[start:stop], weights[start:stop])
            if self.records % self.refresh_every == 0:
                self.flush()
            start = stop

    def _apply_chunk(self, dims: list[int], keys: np.ndarray, weights: np.ndarray) -> None:
        n = len(weights)
        self.records += n
        for c, d in enumerate(dims):
            self.m[d] += int(weights.sum())
        if self.sampler is None:
            sel = None
            active = np.arange(n)
            eff = weights
        else:
            sel = self.sampler.select(n)
            active = np.flatnonzero(sel.any(axis=1))
            eff = np.rint(weights / self.p).astype(np.int64)
        if not len(active):
            return
        per_level: list[list[tuple[np.ndarray, np.ndarray]]] = [[] for _ in range(self.geometry.levels)]
        for c, d in enumerate(dims):
            raw = keys[active, c]
            comp = self.composite(d, raw)
            depth = self._depths(comp)
            for j in range(self.geometry.levels):
                at = np.flatnonzero(depth >= j) if j else np.arange(len(comp))
                if not len(at):
                    break
                self._pending[d][j].append(raw[at])
                per_level[j].append((comp[at], active[at]))
        for j, parts in enumerate(per_level):
            if not parts:
                break
            comp = np.concatenate([p[0] for p in parts])
            rec = np.concatenate([p[1] for p in parts])
            table = self.tables[j]
            if sel is None:
                table.update_many(comp, eff[rec])
            else:
                ri, rows = np.nonzero(sel[rec])
                table.update_many(comp[ri], eff[rec[ri]], rows)

    # -- tracker maintenance ---------------------------------------------
    def flush(self) -> None:
        """Resolve buffered heavy-hitter offers against the current tables."""
        for d in range(self.geometry.dims):
            for j in range(self.geometry.levels):
                pend = self._pending[d][j]
                if pend:
                    self._pending[d][j] = []
                    self._refresh(d, j, np.concatenate([self.trackers[d][j].keys, *pend]))

    def _refresh(self, dim: int, level: int, candidates: np.ndarray) -> None:
        cand = np.unique(candidates)
        comp = self.composite(dim, cand)
        est = self.tables[level].estimate_many(comp)
        order = np.lexsort((cand, -est))[: self.geometry.capacity]
        tr = self.trackers[dim][level]
        tr.keys = cand[order]
        tr.est = est[order]
        tr.nxt = self._next_bit(comp[order], level)

    @property
    def dirty(self) -> bool:
        return any(p for row in self._pending for p in row)

    # -- queries ---------------------------------------------------------
    def estimate(self, dim: int, key: int, level: int = 0) -> int:
        self._check_dim(dim)
        return self.tables[level].estimate(key ^ self.salts[dim])

    def univ_gsum(self, dim: int, kind: GsumKind) -> float:
        self._check_dim(dim)
        if kind.tag == "moment" and kind.order > 4:
            raise ValueError("frequency moments above order 4 are not supported")
        if self.m[dim] == 0:
            return 0.0
        self.flush()
        y = 0.0
        top = self.geometry.levels - 1
        for j in range(top, -1, -1):
            tr = self.trackers[dim][j]
            gv = kind.g(tr.est) if len(tr) else np.zeros(0)
            if j == top:
                y = float(gv.sum())
            else:
                y = 2.0 * y + float(((1.0 - 2.0 * tr.nxt) * gv).sum())
        return max(y, 0.0)

    def cardinality(self, dim: int) -> float:
        return self.univ_gsum(dim, CARDINALITY)

    def entropy(self, dim: int) -> float:
        self._check_dim(dim)
        m = self.m[dim]
        if m <= 0:
            raise DomainError(f"entropy of empty dimension {dim}")
        top = math.log2(m)
        h = top - self.univ_gsum(dim, ENTROPY) / m
        return min(max(h, 0.0), top)

    def heavy_hitters(self, dim: int, threshold_fraction: float) -> list[tuple[int, int]]:
        self._check_dim(dim)
        if not 0.0 < threshold_fraction < 1.0:
            raise ValueError("threshold_fraction must be in (0, 1)")
        self.flush()
        tr = self.trackers[dim][0]
        cut = threshold_fraction * self.m[dim]
        keep = tr.est >= cut
        return list(zip(tr.keys[keep].tolist(), tr.est[keep].tolist()))

    # -- snapshots and merging -------------------------------------------
    def copy(self) -> "MergedUnivSketch":
        out = copy.copy(self)
        out.counters = self.counters.copy()
        out.tables = []
        for j, t in enumerate(self.tables):
            nt = copy.copy(t)
            nt.counters = out.counters[j]
            out.tables.append(nt)
        out.trackers = [[copy.copy(t) for t in row] for row in self.trackers]
        out._pending = [[list(p) for p in row] for row in self._pending]
        out.m = list(self.m)
        out.sampler = copy.deepcopy(self.sampler)
        return out

    def snapshot(self) -> "MergedUnivSketch":
        """Flushed deep copy, safe to hand to another owner."""
        self.flush()
        return self.copy()

    def compatible(self, other: "MergedUnivSketch") -> bool:
        return self.geometry == other.geometry

    def state_equal(self, other: "MergedUnivSketch") -> bool:
        """Counter, stream-length and tracker equality (both sides are flushed)."""
        self.flush()
        other.flush()
        return (
            self.geometry == other.geometry
            and np.array_equal(self.counters, other.counters)
            and self.m == other.m
            and all(a.same_as(b) for ra, rb in zip(self.trackers, other.trackers) for a, b in zip(ra, rb))
        )

    def diff_l2(self, previous: "MergedUnivSketch", dim: int | None = None) -> float:
        """Change score: L2 of the level-0 counter difference (whole table)."""
        if dim is not None:
            self._check_dim(dim)
        if not self.compatible(previous):
            raise GeometryMismatch("sketch geometries or seeds differ")
        return _table_diff_l2(self.tables[0], previous.tables[0])


def merge_all(sketches: Iterable[MergedUnivSketch]) -> MergedUnivSketch:
    """N-way merge: counters and stream lengths summed, trackers re-ranked on the sum."""
    sketches = list(sketches)
    if not sketches:
        raise ValueError("nothing to merge")
    first = sketches[0]
    for s in sketches[1:]:
        if not first.compatible(s):
            raise GeometryMismatch("sketch geometries or seeds differ")
    g = first.geometry
    out = MergedUnivSketch(g, p=first.p, sampling_seed=first.sampling_seed, refresh_every=first.refresh_every)
    for s in sketches:
        s.flush()
        for j in range(g.levels):
            out.tables[j].add_counters(s.counters[j])
            out.tables[j].overflow |= s.tables[j].overflow
        for d in range(g.dims):
            out.m[d] += s.m[d]
        out.records += s.records
    for d in range(g.dims):
        for j in range(g.levels):
            keys = [s.trackers[d][j].keys for s in sketches if len(s.trackers[d][j])]
            if keys:
                out._refresh(d, j, np.concatenate(keys))
    # the merged result starts with fresh instrumentation
    for t in out.tables:
        t.query_hash_calls = 0
    out.query_level_hash_calls = 0
    return out


def merge(a: MergedUnivSketch, b: MergedUnivSketch) -> MergedUnivSketch:
    return merge_all([a, b])


def diff_l2(current: MergedUnivSketch, previous: MergedUnivSketch, dim: int | None = None) -> float:
    return current.diff_l2(previous, dim)
