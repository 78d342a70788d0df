"""Simulated switch data planes.

A data plane sketches every record routed through it into the active
merged sketch and per-dimension histograms, and hands out an immutable
snapshot when its epoch closes. All epochs and switches share one hash
seed so snapshots merge across switches and diff across epochs; only the
sampling generator is re-seeded per (switch, epoch).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError
from .hashing import named_seed, splitmix64
from .sketch.histogram import DimHistogram, ValueDomain
from .sketch.serialize import decode_snapshot, encode_snapshot
from .sketch.universal import MergedUnivSketch, SketchGeometry
from .workload import Record, RecordBatch


@dataclass(frozen=True)
class Epoch:
    index: int
    start: int
    end: int


@dataclass
class EpochSnapshot:
    switch_id: int
    epoch: Epoch
    sketch: MergedUnivSketch
    histograms: dict[str, DimHistogram]
    attributes: tuple[str, ...]
    packets: int = 0
    drops: int = 0

    def encode(self) -> bytes:
        meta = {
            "switch": self.switch_id,
            "epoch": self.epoch.index,
            "start": self.epoch.start,
            "end": self.epoch.end,
            "packets": self.packets,
            "drops": self.drops,
        }
        for i, name in enumerate(self.attributes):
            meta[f"attr:{name}"] = i
        return encode_snapshot(self.sketch, [self.histograms[a] for a in self.attributes], meta)

    @classmethod
    def decode(cls, buf: bytes) -> "EpochSnapshot":
        sketch, hists, meta = decode_snapshot(buf)
        attrs = sorted((v, k[5:]) for k, v in meta.items() if k.startswith("attr:"))
        names = tuple(n for _, n in attrs)
        return cls(
            switch_id=meta["switch"],
            epoch=Epoch(meta["epoch"], meta["start"], meta["end"]),
            sketch=sketch,
            histograms=dict(zip(names, hists)),
            attributes=names,
            packets=meta["packets"],
            drops=meta["drops"],
        )


@dataclass
class DataPlaneStats:
    packets: int = 0
    drops: int = 0
    sketch_updates: int = 0
    histogram_updates: int = 0


class SwitchDataPlane:
    def __init__(
        self,
        switch_id: int,
        node_ids,
        geometry: SketchGeometry,
        epoch_ticks: int,
        p: float = 1.0,
        histogram_buckets: int = 256,
        refresh_every: int = 1024,
        sampling_seed: int | None = None,
    ):
        if epoch_ticks < 1:
            raise ValueError("epoch_ticks must be positive")
        self.switch_id = switch_id
        self.node_ids = tuple(node_ids)
        self.geometry = geometry
        self.epoch_ticks = epoch_ticks
        self.p = p
        self.histogram_buckets = histogram_buckets
        self.refresh_every = refresh_every
        self._sampling_master = named_seed(geometry.seed, "sampling") if sampling_seed is None else sampling_seed
        self.attributes: list[str] = []
        self.domains: dict[str, ValueDomain] = {}
        self.histograms: dict[str, DimHistogram] = {}
        self.epoch = Epoch(0, 0, epoch_ticks)
        self.stats = DataPlaneStats()
        self.sketch = self._fresh_sketch()
        self.previous: EpochSnapshot | None = None

    def _fresh_sketch(self) -> MergedUnivSketch:
        seed = splitmix64(self._sampling_master ^ (self.switch_id << 32) ^ self.epoch.index)
        return MergedUnivSketch(self.geometry, p=self.p, sampling_seed=seed, refresh_every=self.refresh_every)

    def configure(self, name: str, domain: ValueDomain) -> int:
        """Start sketching attribute ``name``; returns its sketch dimension."""
        if name in self.domains:
            if self.domains[name] != domain:
                raise ValueError(f"attribute {name!r} already configured with another domain")
            return self.attributes.index(name)
        if len(self.attributes) >= self.geometry.dims:
            raise CapacityError(f"sketch holds {self.geometry.dims} dimensions; cannot add {name!r}")
        self.attributes.append(name)
        self.domains[name] = domain
        self.histograms[name] = DimHistogram(domain, self.histogram_buckets)
        return len(self.attributes) - 1

    def observe(self, record: Record) -> None:
        if not self.epoch.start <= record.timestamp < self.epoch.end:
            raise ValueError(f"record at t={record.timestamp} outside epoch {self.epoch}")
        self.stats.packets += 1
        if not self.attributes:
            return
        vals = {}
        for name in self.attributes:
            v = record.values.get(name)
            if v is None or (isinstance(v, float) and math.isnan(v)):
                self.stats.drops += 1
                return
            vals[name] = v
        keys = {}
        for dim, name in enumerate(self.attributes):
            keys[dim] = int(self.domains[name].quantize([vals[name]])[0])
            self.histograms[name].update(vals[name])
            self.stats.histogram_updates += 1
        self.sketch.update_record(keys)
        self.stats.sketch_updates += len(keys)

    def observe_batch(self, batch: RecordBatch) -> None:
        n = len(batch)
        if not n:
            return
        if batch.timestamps.min() < self.epoch.start or batch.timestamps.max() >= self.epoch.end:
            raise ValueError(f"batch spans outside epoch {self.epoch}")
        self.stats.packets += n
        if not self.attributes:
            return
        ok = np.ones(n, dtype=bool)
        cols = []
        for name in self.attributes:
            col = batch.values.get(name)
            if col is None:
                self.stats.drops += n
                return
            ok &= ~np.isnan(col)
            cols.append(col)
        self.stats.drops += int(n - ok.sum())
        keys = np.empty((int(ok.sum()), len(cols)), dtype=np.uint64)
        for dim, (name, col) in enumerate(zip(self.attributes, cols)):
            v = col[ok]
            keys[:, dim] = self.domains[name].quantize(v)
            self.histograms[name].update_many(v)
        self.sketch.update_records(range(len(cols)), keys)
        self.stats.sketch_updates += keys.size
        self.stats.histogram_updates += keys.size

    def rotate_epoch(self) -> EpochSnapshot:
        """Close the current epoch and return its snapshot."""
        snap = EpochSnapshot(
            switch_id=self.switch_id,
            epoch=self.epoch,
            sketch=self.sketch.snapshot(),
            histograms={k: h.copy() for k, h in self.histograms.items()},
            attributes=tuple(self.attributes),
            packets=self.stats.packets,
            drops=self.stats.drops,
        )
        self.previous = snap
        self.epoch = Epoch(self.epoch.index + 1, self.epoch.end, self.epoch.end + self.epoch_ticks)
        self.sketch = self._fresh_sketch()
        for h in self.histograms.values():
            h.reset()
        self.stats = DataPlaneStats()
        return snap
