"""Estimate sets and the metric computations shared by all controllers."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Iterable, Mapping

import numpy as np

from .errors import DomainError, UnknownMetric
from .sketch.histogram import DimHistogram, ValueDomain
from .sketch.universal import MergedUnivSketch


class Metric(str, Enum):
    ENTROPY = "entropy"
    CARDINALITY = "cardinality"
    HEAVY_HITTERS = "heavy_hitters"
    CHANGE = "change"
    QUANTILES = "quantiles"
    HISTOGRAM = "histogram"

    @classmethod
    def parse(cls, name) -> "Metric":
        if isinstance(name, Metric):
            return name
        try:
            return cls(str(name).strip().lower())
        except ValueError:
            raise UnknownMetric(f"unknown metric kind {name!r}") from None


class Scope(str, Enum):
    LOCAL = "local"
    GLOBAL = "global"


@dataclass(frozen=True)
class Absent:
    """Placeholder for a metric that is undefined for this epoch."""

    reason: str


DEFAULT_QUANTILES = (0.1, 0.25, 0.5, 0.75, 0.9, 0.99)


@dataclass(frozen=True)
class MetricPlan:
    """Which metrics to compute for which sketch dimensions."""

    dims: tuple[str, ...]
    metrics: Mapping[str, frozenset]
    hh_threshold: float = 0.01
    quantiles: tuple[float, ...] = DEFAULT_QUANTILES
    hh_thresholds: Mapping[str, float] = field(default_factory=dict)

    def threshold(self, dim: str) -> float:
        return self.hh_thresholds.get(dim, self.hh_threshold)

    def pairs(self) -> list[tuple[str, Metric]]:
        return [(d, m) for d in self.dims for m in sorted(self.metrics.get(d, ()), key=lambda x: x.value)]


@dataclass
class EstimateSet:
    entries: dict
    scope: Scope
    epoch: int
    produced_at: int
    switch: int | None = None
    round: int | None = None
    degraded: bool = False
    stale_members: tuple[int, ...] = ()

    def get(self, dim: str, metric: Metric):
        return self.entries[(dim, Metric.parse(metric))]

    def metric_set(self) -> set:
        return set(self.entries)

    def project(self, wanted: Iterable[tuple[str, Metric]]) -> "EstimateSet":
        wanted = set(wanted)
        return replace(self, entries={k: v for k, v in self.entries.items() if k in wanted})


def compute_estimates(
    sketch: MergedUnivSketch,
    histograms: Mapping[str, DimHistogram],
    previous: MergedUnivSketch | None,
    plan: MetricPlan,
) -> dict:
    """Evaluate every (dimension, metric) pair of ``plan``; dims map to sketch indices by position."""
    out: dict = {}
    change = None
    for index, name in enumerate(plan.dims):
        for metric in plan.metrics.get(name, ()):
            key = (name, metric)
            if metric is Metric.ENTROPY:
                try:
                    out[key] = sketch.entropy(index)
                except DomainError:
                    out[key] = Absent("empty stream")
            elif metric is Metric.CARDINALITY:
                out[key] = sketch.cardinality(index)
            elif metric is Metric.HEAVY_HITTERS:
                out[key] = tuple(sketch.heavy_hitters(index, plan.threshold(name)))
            elif metric is Metric.CHANGE:
                if previous is None:
                    out[key] = Absent("no previous epoch")
                else:
                    if change is None:
                        change = sketch.diff_l2(previous)
                    out[key] = change
            elif metric is Metric.QUANTILES:
                h = histograms[name]
                if h.total == 0:
                    out[key] = Absent("empty histogram")
                else:
                    out[key] = tuple((q, h.quantile(q)) for q in plan.quantiles)
            elif metric is Metric.HISTOGRAM:
                out[key] = histograms[name].copy()
    return out


# -- binary encoding (payload of global-estimate downloads) ---------------

_HDR = struct.Struct("<BqqqqBI")
_SCALES = {"linear": 0, "log": 1}
_T_FLOAT, _T_ABSENT, _T_HH, _T_QUANT, _T_HIST = range(5)


def _str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<H", len(raw)) + raw


def encode_estimates(es: EstimateSet) -> bytes:
    out = [
        _HDR.pack(
            0 if es.scope is Scope.LOCAL else 1,
            es.epoch,
            es.produced_at,
            -1 if es.switch is None else es.switch,
            -1 if es.round is None else es.round,
            int(es.degraded),
            len(es.stale_members),
        )
    ]
    out.append(struct.pack(f"<{len(es.stale_members)}q", *es.stale_members))
    keys = sorted(es.entries, key=lambda k: (k[0], k[1].value))
    out.append(struct.pack("<I", len(keys)))
    for dim, metric in keys:
        val = es.entries[(dim, metric)]
        out.append(_str(dim) + _str(metric.value))
        if isinstance(val, Absent):
            out.append(struct.pack("<B", _T_ABSENT) + _str(val.reason))
        elif isinstance(val, DimHistogram):
            d = val.domain
            out.append(struct.pack("<BIddBQ", _T_HIST, val.buckets, d.lo, d.hi, _SCALES[d.scale], val.clamped))
            out.append(val.counts.astype("<i8").tobytes())
        elif metric is Metric.HEAVY_HITTERS:
            out.append(struct.pack("<BI", _T_HH, len(val)))
            for k, e in val:
                out.append(struct.pack("<Qq", k, e))
        elif metric is Metric.QUANTILES:
            out.append(struct.pack("<BI", _T_QUANT, len(val)))
            for q, v in val:
                out.append(struct.pack("<dd", q, v))
        else:
            out.append(struct.pack("<Bd", _T_FLOAT, float(val)))
    return b"".join(out)


def decode_estimates(buf: bytes) -> EstimateSet:
    view = memoryview(buf)
    pos = 0

    def take(fmt: str) -> tuple:
        nonlocal pos
        s = struct.calcsize(fmt)
        if pos + s > len(view):
            raise ValueError("truncated estimate set")
        vals = struct.unpack_from(fmt, view, pos)
        pos += s
        return vals

    def text() -> str:
        nonlocal pos
        (n,) = take("<H")
        s = bytes(view[pos : pos + n]).decode("utf-8")
        pos += n
        return s

    scope, epoch, produced, switch, rnd, degraded, nstale = take(_HDR.format)
    stale = take(f"<{nstale}q") if nstale else ()
    (count,) = take("<I")
    entries: dict[tuple[str, Metric], Any] = {}
    scales = {v: k for k, v in _SCALES.items()}
    for _ in range(count):
        dim = text()
        metric = Metric(text())
        (tag,) = take("<B")
        if tag == _T_FLOAT:
            (val,) = take("<d")
        elif tag == _T_ABSENT:
            val = Absent(text())
        elif tag == _T_HH:
            (n,) = take("<I")
            val = tuple(take("<Qq") for _ in range(n))
        elif tag == _T_QUANT:
            (n,) = take("<I")
            val = tuple(take("<dd") for _ in range(n))
        elif tag == _T_HIST:
            buckets, lo, hi, scale, clamped = take("<IddBQ")
            val = DimHistogram(ValueDomain(lo, hi, scales[scale]), buckets)
            val.counts = np.frombuffer(bytes(view[pos : pos + 8 * buckets]), dtype="<i8").astype(np.int64)
            pos += 8 * buckets
            val.clamped = clamped
        else:
            raise ValueError(f"unknown entry tag {tag}")
        entries[(dim, metric)] = val
    if pos != len(view):
        raise ValueError("trailing bytes after estimate set")
    return EstimateSet(
        entries=entries,
        scope=Scope.LOCAL if scope == 0 else Scope.GLOBAL,
        epoch=epoch,
        produced_at=produced,
        switch=None if switch < 0 else switch,
        round=None if rnd < 0 else rnd,
        degraded=bool(degraded),
        stale_members=tuple(stale),
    )
