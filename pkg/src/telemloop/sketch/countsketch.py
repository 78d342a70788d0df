"""Count sketch over 64-bit keys with saturating signed counters.

Each of the ``d`` rows has an independent bucket hash and sign hash. The
estimate of a key is the median over rows of ``sign * counter[bucket]``;
the L2 estimate is the median over rows of the row's Euclidean norm.
"""

from __future__ import annotations

import numpy as np

from ..hashing import hash_array, hash_int

INT64_MAX = (1 << 63) - 1
INT64_MIN = -(1 << 63)


def _median_int(sorted_vals: np.ndarray) -> np.ndarray:
    """Median along the last axis of already-sorted integers (lower mean for even d)."""
    d = sorted_vals.shape[-1]
    if d % 2:
        return sorted_vals[..., d // 2]
    lo = sorted_vals[..., d // 2 - 1]
    hi = sorted_vals[..., d // 2]
    return (lo + hi) // 2


class CountSketch:
    """A ``d x w`` table of signed 64-bit counters.

    ``counters`` may be a view into a larger buffer; the merged sketch keeps
    all of its level tables in one contiguous array.
    """

    def __init__(self, width: int, bucket_seeds, sign_seeds, counters: np.ndarray | None = None):
        if width < 2 or width & (width - 1):
            raise ValueError(f"width must be a power of two >= 2, got {width}")
        if len(bucket_seeds) != len(sign_seeds) or not bucket_seeds:
            raise ValueError("need one bucket seed and one sign seed per row")
        self.depth = len(bucket_seeds)
        self.width = width
        self._shift = 64 - (width.bit_length() - 1)
        self.bucket_seeds = [int(s) for s in bucket_seeds]
        self.sign_seeds = [int(s) for s in sign_seeds]
        self._np_bucket = np.array(self.bucket_seeds, dtype=np.uint64)
        self._np_sign = np.array(self.sign_seeds, dtype=np.uint64)
        if counters is None:
            counters = np.zeros((self.depth, width), dtype=np.int64)
        elif counters.shape != (self.depth, width) or counters.dtype != np.int64:
            raise ValueError("counter buffer has the wrong shape or dtype")
        self.counters = counters
        self.overflow = False
        # upper bound on max |counter|; exact max is only recomputed near the limit
        self._bound = int(np.abs(counters).max()) if counters.size and counters.any() else 0
        self.hash_calls = 0
        self.query_hash_calls = 0
        self.counter_updates = 0

    # -- hashing ---------------------------------------------------------
    def bucket(self, key: int, row: int) -> int:
        return hash_int(key, self.bucket_seeds[row]) >> self._shift

    def sign(self, key: int, row: int) -> int:
        return 1 - 2 * (hash_int(key, self.sign_seeds[row]) & 1)

    def _buckets_signs(self, keys: np.ndarray, rows: np.ndarray, query: bool = False):
        bseed = self._np_bucket[rows]
        sseed = self._np_sign[rows]
        buckets = (hash_array(keys, bseed) >> np.uint64(self._shift)).astype(np.int64)
        signs = 1 - 2 * (hash_array(keys, sseed) & np.uint64(1)).astype(np.int64)
        if query:
            self.query_hash_calls += 2 * len(keys)
        else:
            self.hash_calls += 2 * len(keys)
        return buckets, signs

    # -- updates ---------------------------------------------------------
    def update(self, key: int, weight: int = 1) -> None:
        for row in range(self.depth):
            b = self.bucket(key, row)
            s = self.sign(key, row)
            self._add_scalar(row, b, s * weight)
        self.hash_calls += 2 * self.depth
        self.counter_updates += self.depth

    def _add_scalar(self, row: int, b: int, delta: int) -> None:
        cur = int(self.counters[row, b])
        new = cur + delta
        if new > INT64_MAX:
            new = INT64_MAX
            self.overflow = True
        elif new < INT64_MIN:
            new = INT64_MIN
            self.overflow = True
        self.counters[row, b] = new
        self._bound = max(self._bound, abs(new))

    def update_many(self, keys: np.ndarray, weights: np.ndarray, rows: np.ndarray | None = None) -> None:
        """Apply ``(key, weight)`` pairs; ``rows`` restricts each pair to one row.

        Without ``rows`` every pair updates all rows.
        """
        keys = np.asarray(keys, dtype=np.uint64)
        weights = np.asarray(weights, dtype=np.int64)
        if rows is None:
            n = len(keys)
            rows = np.tile(np.arange(self.depth), n)
            keys = np.repeat(keys, self.depth)
            weights = np.repeat(weights, self.depth)
        else:
            rows = np.asarray(rows, dtype=np.int64)
        if len(keys) == 0:
            return
        buckets, signs = self._buckets_signs(keys, rows)
        self.apply(rows, buckets, signs * weights)

    def apply(self, rows: np.ndarray, buckets: np.ndarray, deltas: np.ndarray) -> None:
        """Add precomputed deltas at ``(row, bucket)`` cells, saturating on overflow."""
        self.counter_updates += len(deltas)
        mass = int(np.abs(deltas).sum(dtype=np.float64))
        if self._bound + mass < INT64_MAX // 2:
            np.add.at(self.counters.reshape(-1), rows * self.width + buckets, deltas)
            self._bound += mass
            return
        self._bound = int(np.abs(self.counters).max())
        if self._bound + mass < INT64_MAX // 2:
            np.add.at(self.counters.reshape(-1), rows * self.width + buckets, deltas)
            self._bound += mass
            return
        for r, b, v in zip(rows.tolist(), buckets.tolist(), deltas.tolist()):
            self._add_scalar(r, b, v)

    def add_counters(self, other: np.ndarray) -> None:
        """Counter-wise saturating addition of another table's counters."""
        total = self.counters.astype(object) + other.astype(object) if self._risky(other) else None
        if total is None:
            self.counters += other
        else:
            clipped = np.clip(total, INT64_MIN, INT64_MAX)
            if (clipped != total).any():
                self.overflow = True
            self.counters[...] = clipped.astype(np.int64)
        self._bound = int(np.abs(self.counters).max()) if self.counters.any() else 0

    def _risky(self, other: np.ndarray) -> bool:
        if not other.size:
            return False
        return self._bound + int(np.abs(other).max()) >= INT64_MAX // 2

    # -- queries ---------------------------------------------------------
    def estimate(self, key: int) -> int:
        vals = sorted(self.sign(key, r) * int(self.counters[r, self.bucket(key, r)]) for r in range(self.depth))
        self.query_hash_calls += 2 * self.depth
        mid = self.depth // 2
        return vals[mid] if self.depth % 2 else (vals[mid - 1] + vals[mid]) // 2

    def estimate_many(self, keys: np.ndarray) -> np.ndarray:
        keys = np.asarray(keys, dtype=np.uint64)
        if len(keys) == 0:
            return np.zeros(0, dtype=np.int64)
        n = len(keys)
        rows = np.tile(np.arange(self.depth), n)
        buckets, signs = self._buckets_signs(np.repeat(keys, self.depth), rows, query=True)
        vals = (signs * self.counters[rows, buckets]).reshape(n, self.depth)
        vals.sort(axis=1)
        return _median_int(vals)

    def l2(self) -> float:
        norms = np.sqrt((self.counters.astype(np.float64) ** 2).sum(axis=1))
        return float(np.median(norms))

    def is_zero(self) -> bool:
        return not self.counters.any()


def diff_l2(a: CountSketch, b: CountSketch) -> float:
    """L2 estimate of the frequency-difference vector of two compatible tables."""
    if a.width != b.width or a.bucket_seeds != b.bucket_seeds or a.sign_seeds != b.sign_seeds:
        raise ValueError("count sketches are not compatible")
    diff = a.counters.astype(np.float64) - b.counters.astype(np.float64)
    return float(np.median(np.sqrt((diff**2).sum(axis=1))))
