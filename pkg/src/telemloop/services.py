"""Closed-loop services: range re-sharding and heavy-hitter driven caching."""

from __future__ import annotations

import bisect
import statistics
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .estimates import Absent, EstimateSet, Metric
from .sketch.histogram import DimHistogram


@dataclass(frozen=True)
class PartitionMap:
    """Ranges ``[b_{i-1}, b_i)`` over one dimension; a boundary value belongs to the right range."""

    dimension: str
    boundaries: tuple[float, ...]
    nodes: tuple[int, ...]
    version: int = 0
    degenerate: bool = False
    effective_ranges: int | None = None

    def __post_init__(self):
        if len(self.nodes) != len(self.boundaries) + 1:
            raise ValueError("need exactly one more node than boundaries")
        if any(b >= c for b, c in zip(self.boundaries, self.boundaries[1:])):
            raise ValueError("boundaries must be strictly increasing")

    @property
    def n_ranges(self) -> int:
        return len(self.nodes)

    def route(self, value: float) -> int:
        return self.nodes[bisect.bisect_right(self.boundaries, value)]

    def route_many(self, values) -> np.ndarray:
        idx = np.searchsorted(np.asarray(self.boundaries, dtype=np.float64), np.asarray(values, dtype=np.float64), side="right")
        return np.asarray(self.nodes, dtype=np.int64)[idx]

    def to_text(self) -> str:
        lines = [
            f"# partition-map version {self.version}",
            f"dimension {self.dimension}",
            "nodes " + " ".join(str(n) for n in self.nodes),
            f"degenerate {int(self.degenerate)}",
        ]
        lines += [repr(float(b)) for b in self.boundaries]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PartitionMap":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        head = lines[0].split()
        if head[:3] != ["#", "partition-map", "version"]:
            raise ValueError("not a partition map")
        fields = {}
        for ln in lines[1:4]:
            k, _, v = ln.partition(" ")
            fields[k] = v
        return cls(
            dimension=fields["dimension"],
            boundaries=tuple(float(x) for x in lines[4:]),
            nodes=tuple(int(x) for x in fields["nodes"].split()),
            version=int(head[3]),
            degenerate=bool(int(fields["degenerate"])),
        )


def uniform_map(dimension: str, hist_or_domain, n_nodes: int) -> PartitionMap:
    """Equal-width ranges in domain position space; the bootstrap map before any telemetry."""
    domain = getattr(hist_or_domain, "domain", hist_or_domain)
    pos = np.arange(1, n_nodes) / n_nodes
    return PartitionMap(dimension, tuple(float(v) for v in domain.value_at(pos)), tuple(range(n_nodes)), version=0)


def compute_partition(hist: DimHistogram, n_nodes: int, dimension: str = "", version: int = 1) -> PartitionMap:
    """Equi-depth ranges with boundaries at the i/n quantile bucket edges."""
    total = hist.total
    if total <= 0:
        raise ValueError("cannot partition an empty histogram")
    if n_nodes < 1:
        raise ValueError("n_nodes must be at least 1")
    nb = hist.buckets
    n_cuts = min(n_nodes - 1, nb - 1)
    edges = [hist.quantile_bucket(i / n_nodes) for i in range(1, n_cuts + 1)]
    prev = 0
    for i, e in enumerate(edges):
        edges[i] = prev = max(e, prev + 1)
    nxt = nb
    for i in range(len(edges) - 1, -1, -1):
        edges[i] = nxt = min(edges[i], nxt - 1)
    nonempty = int(np.count_nonzero(hist.counts))
    cum = np.concatenate([[0], np.cumsum(hist.counts)])
    bounds = [0] + edges + [nb]
    effective = sum(1 for a, b in zip(bounds, bounds[1:]) if cum[b] > cum[a])
    values = tuple(hist.lower_edge(e) for e in edges)
    # float rounding of the edge values must not break strict ordering
    if any(b >= c for b, c in zip(values, values[1:])):
        values = tuple(sorted(set(values)))
    n_ranges = len(values) + 1
    return PartitionMap(
        dimension,
        values,
        tuple(range(n_ranges)),
        version=version,
        degenerate=nonempty < n_nodes or n_ranges < n_nodes,
        effective_ranges=effective,
    )


def range_masses(pmap: PartitionMap, values) -> np.ndarray:
    return np.bincount(pmap.route_many(values), minlength=max(pmap.nodes) + 1)


def moved_mass(old: PartitionMap | None, new: PartitionMap, hist: DimHistogram) -> float:
    """Fraction of ``hist``'s mass whose owning node differs between the two maps."""
    if old is None or hist.total == 0:
        return 0.0 if old is not None else 1.0
    mids = hist.domain.value_at((np.arange(hist.buckets) + 0.5) / hist.buckets)
    moved = old.route_many(mids) != new.route_many(mids)
    return float(hist.counts[moved].sum() / hist.total)


class LoadLedger:
    """Per-node, per-epoch record counts."""

    def __init__(self, n_nodes: int):
        if n_nodes < 1:
            raise ValueError("n_nodes must be at least 1")
        self.n_nodes = n_nodes
        self.epochs: list[int] = []
        self.loads: list[np.ndarray] = []

    def record(self, epoch: int, node_ids) -> np.ndarray:
        counts = np.bincount(np.asarray(node_ids, dtype=np.int64), minlength=self.n_nodes)[: self.n_nodes]
        self.epochs.append(epoch)
        self.loads.append(counts)
        return counts

    @staticmethod
    def imbalance_of(counts: np.ndarray) -> float:
        total = counts.sum()
        if total == 0:
            return 1.0
        return float(counts.max() / (total / len(counts)))

    def imbalance(self, i: int = -1) -> float:
        return self.imbalance_of(self.loads[i]) if self.loads else 1.0

    def recent_imbalance(self, window: int) -> float | None:
        """Mean imbalance over the last ``window`` epochs, or None with fewer on record."""
        if len(self.loads) < window:
            return None
        return float(np.mean([self.imbalance_of(c) for c in self.loads[-window:]]))

    def mean_imbalance(self, start: int = 0) -> float:
        vals = [self.imbalance_of(c) for e, c in zip(self.epochs, self.loads) if e >= start]
        return float(np.mean(vals)) if vals else 1.0


@dataclass
class ReshardEvent:
    epoch: int
    version: int
    reason: str
    moved_fraction: float
    change: float | None


class ReshardService:
    """Emits a new equi-depth map on a change-score spike or sustained imbalance.

    A spike is a change score above ``change_factor`` times the median of
    the last ``trailing`` scores. Imbalance is the ledger's mean over the
    last ``window`` epochs. At most one map is emitted per ``window`` epochs.
    """

    def __init__(
        self,
        dimension: str,
        n_nodes: int,
        ledger: LoadLedger,
        window: int = 5,
        theta: float = 1.3,
        change_factor: float = 5.0,
        trailing: int = 8,
    ):
        self.dimension = dimension
        self.n_nodes = n_nodes
        self.ledger = ledger
        self.window = window
        self.theta = theta
        self.change_factor = change_factor
        self.history: deque[float] = deque(maxlen=trailing)
        self.current: PartitionMap | None = None
        self.last_emit: int | None = None
        self.events: list[ReshardEvent] = []
        self._since_install = 0

    def spike(self, change: float) -> bool:
        if not self.history:
            return False
        return change > self.change_factor * statistics.median(self.history)

    def step(self, es: EstimateSet) -> PartitionMap | None:
        hist = es.entries.get((self.dimension, Metric.HISTOGRAM))
        change = es.entries.get((self.dimension, Metric.CHANGE))
        change = None if change is None or isinstance(change, Absent) else float(change)
        if hist is None or hist.total == 0:
            if change is not None:
                self.history.append(change)
            return None
        reason = None
        if self.current is None:
            reason = "initial"
        elif self.last_emit is None or es.epoch - self.last_emit >= self.window:
            if change is not None and self.spike(change):
                reason = "change"
            else:
                recent = self.ledger.recent_imbalance(self.window)
                if recent is not None and recent > self.theta:
                    reason = "imbalance"
        if change is not None:
            self.history.append(change)
        if reason is None:
            return None
        version = 1 if self.current is None else self.current.version + 1
        new = compute_partition(hist, self.n_nodes, self.dimension, version)
        self.events.append(ReshardEvent(es.epoch, version, reason, moved_mass(self.current, new, hist), change))
        self.current = new
        self.last_emit = es.epoch
        return new


class HotKeyCache:
    def __init__(self, capacity: int):
        if capacity < 0:
            raise ValueError("capacity must be non-negative")
        self.capacity = capacity
        self.hits: dict[int, int] = {}
        self.total_hits = 0
        self.total_misses = 0
        self.refreshes = 0

    @property
    def resident(self) -> set[int]:
        return set(self.hits)

    def __len__(self) -> int:
        return len(self.hits)

    def refresh(self, hh) -> None:
        """Replace the resident set with the top ``capacity`` keys of ``hh`` (sorted descending)."""
        keys = []
        seen = set()
        for item in hh:
            k = int(item[0] if isinstance(item, tuple) else item)
            if k not in seen:
                seen.add(k)
                keys.append(k)
            if len(keys) == self.capacity:
                break
        self.hits = {k: self.hits.get(k, 0) for k in keys}
        self.refreshes += 1

    def lookup(self, key: int) -> bool:
        key = int(key)
        if key in self.hits:
            self.hits[key] += 1
            self.total_hits += 1
            return True
        self.total_misses += 1
        return False

    def lookup_many(self, keys) -> int:
        keys = np.asarray(keys, dtype=np.uint64)
        if not len(keys) or not self.hits:
            self.total_misses += len(keys)
            return 0
        resident = np.fromiter(self.hits, dtype=np.uint64, count=len(self.hits))
        hit = np.isin(keys, resident)
        uniq, counts = np.unique(keys[hit], return_counts=True)
        for k, c in zip(uniq.tolist(), counts.tolist()):
            self.hits[k] += c
        n_hit = int(hit.sum())
        self.total_hits += n_hit
        self.total_misses += len(keys) - n_hit
        return n_hit

    @property
    def hit_rate(self) -> float:
        n = self.total_hits + self.total_misses
        return self.total_hits / n if n else 0.0


class CacheService:
    """Keeps a :class:`HotKeyCache` filled from heavy-hitter feedback.

    With ``refresh=False`` the cache is filled from the first non-empty
    heavy-hitter list and then left alone (the frozen baseline).
    """

    def __init__(self, dimension: str, capacity: int = 64, refresh: bool = True):
        self.dimension = dimension
        self.cache = HotKeyCache(capacity)
        self.refresh = refresh

    def step(self, es: EstimateSet) -> bool:
        hh = es.entries.get((self.dimension, Metric.HEAVY_HITTERS))
        if hh is None or isinstance(hh, Absent):
            return False
        if not self.refresh and self.cache.refreshes and len(self.cache):
            return False
        self.cache.refresh(hh)
        return True
