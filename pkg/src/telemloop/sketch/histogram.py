"""Fixed-bucket per-dimension histograms and the shared value quantizer."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

KEY_BITS = 16
KEY_SPACE = 1 << KEY_BITS


@dataclass(frozen=True)
class ValueDomain:
    """A half-open value range ``[lo, hi)`` with linear or log scaling."""

    lo: float
    hi: float
    scale: str = "linear"

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"degenerate domain [{self.lo}, {self.hi})")
        if self.scale not in ("linear", "log"):
            raise ValueError(f"unknown scale {self.scale!r}")
        if self.scale == "log" and self.lo <= 0:
            raise ValueError("log-scaled domain needs lo > 0")

    def position(self, values) -> np.ndarray:
        """Map values to [0, 1) positions; out-of-domain values fall outside."""
        v = np.asarray(values, dtype=np.float64)
        if self.scale == "linear":
            return (v - self.lo) / (self.hi - self.lo)
        with np.errstate(divide="ignore", invalid="ignore"):
            logs = np.log(np.where(v > 0, v, np.nan))
        pos = (logs - math.log(self.lo)) / (math.log(self.hi) - math.log(self.lo))
        return np.where(np.isnan(pos), -1.0, pos)

    def value_at(self, position) -> np.ndarray:
        p = np.asarray(position, dtype=np.float64)
        if self.scale == "linear":
            return self.lo + p * (self.hi - self.lo)
        return np.exp(math.log(self.lo) + p * (math.log(self.hi) - math.log(self.lo)))

    def quantize(self, values) -> np.ndarray:
        """Quantize values onto the 2**16 key grid (clamped at the edges)."""
        idx = np.floor(self.position(values) * KEY_SPACE)
        return np.clip(idx, 0, KEY_SPACE - 1).astype(np.uint64)

    def key_value(self, keys) -> np.ndarray:
        """Lower edge of each key's grid cell."""
        return self.value_at(np.asarray(keys, dtype=np.float64) / KEY_SPACE)


class DimHistogram:
    """``B`` buckets over a :class:`ValueDomain`.

    Values outside the domain land in the edge buckets and bump ``clamped``.
    """

    def __init__(self, domain: ValueDomain, buckets: int = 256):
        if buckets < 1:
            raise ValueError("need at least one bucket")
        self.domain = domain
        self.buckets = buckets
        self.counts = np.zeros(buckets, dtype=np.int64)
        self.clamped = 0

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def config(self) -> tuple:
        return (self.domain, self.buckets)

    def bucket_of(self, values) -> np.ndarray:
        idx = np.floor(self.domain.position(values) * self.buckets)
        return np.clip(idx, 0, self.buckets - 1).astype(np.int64)

    def edges(self) -> np.ndarray:
        return self.domain.value_at(np.arange(self.buckets + 1) / self.buckets)

    def lower_edge(self, bucket: int) -> float:
        return float(self.domain.value_at(bucket / self.buckets))

    def update(self, value: float, weight: int = 1) -> None:
        self.update_many(np.array([value]), weight)

    def update_many(self, values, weight: int = 1) -> None:
        values = np.asarray(values, dtype=np.float64)
        if not len(values):
            return
        pos = self.domain.position(values)
        self.clamped += int(((pos < 0) | (pos >= 1)).sum())
        self.counts += np.bincount(self.bucket_of(values), minlength=self.buckets) * weight

    def merge(self, other: "DimHistogram") -> "DimHistogram":
        if self.config() != other.config():
            raise ValueError("histogram configurations differ")
        out = self.copy()
        out.counts += other.counts
        out.clamped += other.clamped
        return out

    def quantile_bucket(self, q: float) -> int:
        if not 0.0 <= q <= 1.0:
            raise ValueError(f"quantile {q} outside [0, 1]")
        total = self.total
        if total <= 0:
            raise ValueError("quantile of an empty histogram")
        cum = np.cumsum(self.counts)
        # first bucket reaching q of the mass; q = 0 means the first nonempty bucket
        return int(np.searchsorted(cum, max(q * total, 1e-12), side="left"))

    def quantile(self, q: float) -> float:
        return self.lower_edge(self.quantile_bucket(q))

    def copy(self) -> "DimHistogram":
        out = DimHistogram(self.domain, self.buckets)
        out.counts = self.counts.copy()
        out.clamped = self.clamped
        return out

    def reset(self) -> None:
        self.counts[:] = 0
        self.clamped = 0

    def __eq__(self, other):
        if not isinstance(other, DimHistogram):
            return NotImplemented
        return self.config() == other.config() and self.clamped == other.clamped and np.array_equal(self.counts, other.counts)

    def __repr__(self):
        return f"DimHistogram({self.domain}, buckets={self.buckets}, total={self.total})"


def merge_histograms(hists) -> DimHistogram:
    hists = list(hists)
    out = hists[0].copy()
    for h in hists[1:]:
        out = out.merge(h)
    return out
