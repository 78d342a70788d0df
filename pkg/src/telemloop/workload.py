"""Deterministic synthetic scientific workload.

Records are particle-like: an entity id, a timestamp (the global record
index, which is also the simulated clock) and one real value per
dimension. Each dimension has a base distribution and optional drifts:

* ramp: the location parameter (lognormal mu, or the zipf exponent)
  moves by ``ramp_rate`` per epoch;
* shift: from ``shift_epoch`` on every value moves by ``shift_delta``
  (zipf keys wrap around the universe);
* concentration: a growing fraction of records takes one of a few hot
  values, so mass piles up on few keys and entropy falls.

The lognormal-with-concentration schedule imitates the qualitative shape
of energy distributions in particle simulations; its parameters are not
fitted to any published data.

Every epoch of every dimension draws from its own generator seeded by
``(seed, dimension, epoch)``, so a stream is replayable chunk by chunk.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Mapping

import numpy as np

from .sketch.histogram import ValueDomain


@dataclass(frozen=True)
class Record:
    entity_id: int
    timestamp: int
    values: Mapping[str, float]
    source: int


@dataclass
class RecordBatch:
    """Column-oriented block of consecutive records (one epoch or part of one)."""

    epoch: int
    entity_ids: np.ndarray
    timestamps: np.ndarray
    values: dict[str, np.ndarray]
    sources: np.ndarray

    def __len__(self) -> int:
        return len(self.entity_ids)

    def take(self, idx) -> "RecordBatch":
        return RecordBatch(
            self.epoch,
            self.entity_ids[idx],
            self.timestamps[idx],
            {k: v[idx] for k, v in self.values.items()},
            self.sources[idx],
        )

    def records(self) -> Iterator[Record]:
        names = list(self.values)
        cols = [self.values[n].tolist() for n in names]
        for i, (eid, ts, src) in enumerate(zip(self.entity_ids.tolist(), self.timestamps.tolist(), self.sources.tolist())):
            yield Record(eid, ts, {n: c[i] for n, c in zip(names, cols)}, src)


@dataclass(frozen=True)
class DimSchedule:
    name: str
    dist: str = "lognormal"  # zipf | lognormal | mixture
    # zipf
    zipf_s: float = 1.1
    universe: int = 10_000
    # lognormal
    mu: float = 0.0
    sigma: float = 1.0
    # mixture of lognormals: ((weight, mu, sigma), ...)
    components: tuple[tuple[float, float, float], ...] = ()
    # drifts
    ramp_rate: float = 0.0
    shift_epoch: int | None = None
    shift_delta: float = 0.0
    conc_start: int | None = None
    conc_end: int | None = None
    conc_max: float = 0.0
    hot_values: tuple[float, ...] = ()
    # telemetry domain of the dimension
    lo: float | None = None
    hi: float | None = None
    scale: str | None = None

    def __post_init__(self):
        if self.dist not in ("zipf", "lognormal", "mixture"):
            raise ValueError(f"unknown distribution {self.dist!r}")
        if self.dist == "zipf" and (self.universe < 1 or self.zipf_s <= 0):
            raise ValueError("zipf needs universe >= 1 and exponent > 0")
        if self.dist == "mixture" and not self.components:
            raise ValueError("mixture needs components")
        if not 0.0 <= self.conc_max <= 1.0:
            raise ValueError("conc_max must be a fraction")
        if self.conc_start is not None and self.conc_end is not None and self.conc_end < self.conc_start:
            raise ValueError("conc_end precedes conc_start")

    def domain(self) -> ValueDomain:
        if self.dist == "zipf":
            return ValueDomain(self.lo if self.lo is not None else 0.0, self.hi if self.hi is not None else float(self.universe), self.scale or "linear")
        return ValueDomain(self.lo if self.lo is not None else 1e-3, self.hi if self.hi is not None else 1e4, self.scale or "log")

    def concentration(self, epoch: int) -> float:
        if self.conc_start is None or self.conc_max <= 0 or epoch < self.conc_start:
            return 0.0
        end = self.conc_end if self.conc_end is not None else self.conc_start
        if epoch >= end:
            return self.conc_max
        return self.conc_max * (epoch - self.conc_start + 1) / (end - self.conc_start + 1)

    def hot(self) -> tuple[float, ...]:
        if self.hot_values:
            return self.hot_values
        if self.dist == "zipf":
            return tuple(float(self.universe // 2 + i) for i in range(4))
        mu = self.mu if self.dist == "lognormal" else self.components[0][1]
        sigma = self.sigma if self.dist == "lognormal" else self.components[0][2]
        return tuple(float(math.exp(mu + sigma * z)) for z in (1.0, 1.5, 2.0, 2.5))


@dataclass(frozen=True)
class DriftSchedule:
    dims: tuple[DimSchedule, ...]
    seed: int = 0
    epoch_records: int = 4000  # records per epoch, all switches together

    def __post_init__(self):
        if not self.dims:
            raise ValueError("schedule needs at least one dimension")
        names = [d.name for d in self.dims]
        if len(set(names)) != len(names):
            raise ValueError("duplicate dimension names")
        if self.epoch_records < 1:
            raise ValueError("epoch_records must be positive")

    @property
    def names(self) -> list[str]:
        return [d.name for d in self.dims]


@lru_cache(maxsize=64)
def _zipf_cdf(s: float, universe: int) -> np.ndarray:
    w = np.arange(1, universe + 1, dtype=np.float64) ** -s
    cdf = np.cumsum(w)
    return cdf / cdf[-1]


def _seed_words(seed: int) -> list[int]:
    return [seed & 0xFFFFFFFF, (seed >> 32) & 0xFFFFFFFF]


def sample_dimension(dim: DimSchedule, index: int, epoch: int, n: int, seed: int) -> np.ndarray:
    """Values of dimension ``dim`` for ``n`` records of ``epoch``."""
    rng = np.random.default_rng(_seed_words(seed) + [index, epoch])
    if dim.dist == "zipf":
        s = max(dim.zipf_s + dim.ramp_rate * epoch, 1e-6)
        vals = np.searchsorted(_zipf_cdf(round(s, 12), dim.universe), rng.random(n), side="right").astype(np.float64)
    elif dim.dist == "lognormal":
        vals = np.exp(rng.normal(dim.mu + dim.ramp_rate * epoch, dim.sigma, n))
    else:
        weights = np.array([c[0] for c in dim.components], dtype=np.float64)
        comp = rng.choice(len(weights), size=n, p=weights / weights.sum())
        mus = np.array([c[1] for c in dim.components]) + dim.ramp_rate * epoch
        sigmas = np.array([c[2] for c in dim.components])
        vals = np.exp(rng.normal(mus[comp], sigmas[comp]))
    frac = dim.concentration(epoch)
    if frac > 0:
        hot = np.array(dim.hot(), dtype=np.float64)
        pick = rng.random(n) < frac
        vals[pick] = hot[rng.integers(0, len(hot), int(pick.sum()))]
    if dim.shift_epoch is not None and epoch >= dim.shift_epoch and dim.shift_delta:
        vals = vals + dim.shift_delta
        if dim.dist == "zipf":
            vals = np.mod(vals, dim.universe)
    return vals


@dataclass
class RecordStream:
    schedule: DriftSchedule
    n_records: int
    n_nodes: int

    def __post_init__(self):
        if self.n_records < 0 or self.n_nodes < 1:
            raise ValueError("need n_records >= 0 and n_nodes >= 1")

    @property
    def n_epochs(self) -> int:
        return -(-self.n_records // self.schedule.epoch_records)

    def epoch_batch(self, epoch: int) -> RecordBatch:
        per = self.schedule.epoch_records
        start = epoch * per
        stop = min(self.n_records, start + per)
        n = max(stop - start, 0)
        idx = np.arange(start, start + n, dtype=np.int64)
        values = {
            d.name: sample_dimension(d, i, epoch, n, self.schedule.seed) for i, d in enumerate(self.schedule.dims)
        }
        return RecordBatch(epoch, idx.astype(np.uint64), idx, values, idx % self.n_nodes)

    def batches(self) -> Iterator[RecordBatch]:
        for e in range(self.n_epochs):
            yield self.epoch_batch(e)

    def records(self) -> Iterator[Record]:
        for b in self.batches():
            yield from b.records()


def generate(schedule: DriftSchedule, n_records: int, n_nodes: int) -> RecordStream:
    """Deterministic record stream; source nodes are assigned round-robin."""
    return RecordStream(schedule, n_records, n_nodes)
