"""Brute-force oracle: exact hash-map counting over the same generated stream.

Emits the simulator's trace schema so the two traces diff row by row.
Per switch and epoch it reports exact frequencies (as heavy hitters),
entropy, cardinality, L2 change and quantiles; globally it does the same
at every sync round over the union of all switches' epoch. Node loads
come from a clairvoyant equi-depth partition of each epoch's exact data,
and the cache row is the hit rate of the best static resident set for
the stationary prefix of the stream.
"""

from __future__ import annotations

import math

import numpy as np

from .config import AttributeConfig, RunConfig
from .control import CENTRAL_ID
from .estimates import Absent, EstimateSet, Metric, MetricPlan, Scope
from .services import LoadLedger
from .sim import config_plan, estimate_rows, fmt_value
from .workload import RecordBatch, generate


class ExactCounts:
    """Exact per-dimension frequencies of quantized keys, plus raw values for quantiles."""

    def __init__(self, keys: dict[str, np.ndarray], values: dict[str, np.ndarray]):
        self.values = values
        self.freqs = {}
        for name, k in keys.items():
            uniq, counts = np.unique(k, return_counts=True)
            self.freqs[name] = (uniq, counts.astype(np.int64))
        self.n = len(next(iter(values.values()))) if values else 0

    def cardinality(self, dim: str) -> int:
        return len(self.freqs[dim][0])

    def entropy(self, dim: str):
        counts = self.freqs[dim][1]
        m = counts.sum()
        if m == 0:
            return Absent("empty stream")
        p = counts / m
        return float(max(-(p * np.log2(p)).sum(), 0.0))

    def heavy_hitters(self, dim: str, threshold: float) -> tuple:
        keys, counts = self.freqs[dim]
        if not len(keys):
            return ()
        sel = counts >= threshold * counts.sum()
        order = np.lexsort((keys[sel], -counts[sel]))
        return tuple((int(k), int(c)) for k, c in zip(keys[sel][order], counts[sel][order]))

    def quantiles(self, dim: str, qs) -> tuple | Absent:
        v = np.sort(self.values[dim])
        if not len(v):
            return Absent("empty histogram")
        out = []
        for q in qs:
            k = min(max(math.ceil(q * len(v) - 1e-9), 1), len(v))
            out.append((q, float(v[k - 1])))
        return tuple(out)


def exact_l2_change(cur: ExactCounts, prev: ExactCounts, dims) -> float:
    """L2 norm of the frequency difference over all (dimension, key) pairs."""
    total = 0
    for d in dims:
        ck, cc = cur.freqs[d]
        pk, pc = prev.freqs[d]
        keys = np.concatenate([ck, pk])
        w = np.concatenate([cc, -pc])
        _, inv = np.unique(keys, return_inverse=True)
        delta = np.bincount(inv, weights=w)
        total += int((delta.astype(np.int64) ** 2).sum())
    return math.sqrt(total)


def exact_estimates(counts: ExactCounts, previous: ExactCounts | None, plan: MetricPlan) -> dict:
    out: dict = {}
    change = None
    for name in plan.dims:
        for metric in plan.metrics.get(name, ()):
            key = (name, metric)
            if metric is Metric.ENTROPY:
                out[key] = counts.entropy(name)
            elif metric is Metric.CARDINALITY:
                out[key] = counts.cardinality(name)
            elif metric is Metric.HEAVY_HITTERS:
                out[key] = counts.heavy_hitters(name, plan.threshold(name))
            elif metric is Metric.CHANGE:
                if previous is None:
                    out[key] = Absent("no previous epoch")
                else:
                    if change is None:
                        change = exact_l2_change(counts, previous, plan.dims)
                    out[key] = change
            elif metric is Metric.QUANTILES:
                out[key] = counts.quantiles(name, plan.quantiles)
            elif metric is Metric.HISTOGRAM:
                out[key] = None
    return out


def exact_partition(values: np.ndarray, n_nodes: int) -> np.ndarray:
    """Clairvoyant equi-depth boundaries at the exact i/n quantiles of ``values``."""
    v = np.sort(values)
    if not len(v):
        return np.zeros(0)
    idx = [min(math.ceil(i * len(v) / n_nodes), len(v) - 1) for i in range(1, n_nodes)]
    return v[idx]


def clairvoyant_cache_keys(cfg: RunConfig, stream, domain) -> tuple[np.ndarray, int]:
    """Top-capacity keys over the stationary prefix of the cache dimension; returns (keys, prefix epochs)."""
    dim = cfg.dim(cfg.cache_dim)
    stop = stream.n_epochs
    if dim.shift_epoch is not None:
        stop = min(stop, dim.shift_epoch)
    if dim.conc_start is not None and dim.conc_max > 0:
        stop = min(stop, dim.conc_start)
    if dim.ramp_rate:
        stop = min(stop, 1)
    totals: dict[int, int] = {}
    for e in range(stop):
        keys = domain.quantize(stream.epoch_batch(e).values[cfg.cache_dim])
        uniq, c = np.unique(keys, return_counts=True)
        for k, n in zip(uniq.tolist(), c.tolist()):
            totals[k] = totals.get(k, 0) + n
    ranked = sorted(totals.items(), key=lambda kv: (-kv[1], kv[0]))[: cfg.cache_capacity]
    return np.array([k for k, _ in ranked], dtype=np.uint64), stop


class Oracle:
    def __init__(self, cfg: RunConfig):
        cfg.validate()
        self.cfg = cfg
        self.plan = config_plan(cfg)
        self.stream = generate(cfg.schedule(), cfg.records, cfg.n_nodes)
        self.domains = {}
        for name in self.plan.dims:
            attr = next((a for a in cfg.attribute_list() if a.name == name), None)
            if attr is None:
                attr = AttributeConfig(name)
            self.domains[name] = cfg.attribute_spec(attr).domain
        self.rows: list[tuple] = []

    def _counts(self, batch: RecordBatch) -> ExactCounts:
        values = {d: batch.values[d] for d in self.plan.dims}
        keys = {d: self.domains[d].quantize(v) for d, v in values.items()}
        return ExactCounts(keys, values)

    def run(self) -> tuple[list[tuple], dict]:
        cfg = self.cfg
        plan = self.plan
        prev_local: dict[int, ExactCounts] = {}
        prev_global: ExactCounts | None = None
        cache_keys = None
        if cfg.cache:
            cache_keys, stationary = clairvoyant_cache_keys(cfg, self.stream, self.domains[cfg.cache_dim])
        ledger = LoadLedger(cfg.n_nodes) if cfg.reshard else None
        E = cfg.epoch_ticks
        for e in range(self.stream.n_epochs):
            batch = self.stream.epoch_batch(e)
            if cfg.reshard:
                vals = batch.values[cfg.reshard_dim]
                bounds = exact_partition(vals, cfg.n_nodes)
                loads = ledger.record(e, np.searchsorted(bounds, vals, side="right"))
                for node, c in enumerate(loads.tolist()):
                    self.rows.append((e, "node", node, cfg.reshard_dim, "load", str(c), 0))
                self.rows.append((e, "service", -1, cfg.reshard_dim, "imbalance", fmt_value(LoadLedger.imbalance_of(loads)), 0))
            if cfg.cache:
                keys = self.domains[cfg.cache_dim].quantize(batch.values[cfg.cache_dim])
                rate = float(np.isin(keys, cache_keys).sum() / max(len(keys), 1))
                self.rows.append((e, "service", -1, cfg.cache_dim, "cache_hit_rate", fmt_value(rate), 0))
            switches = batch.sources // cfg.nodes_per_switch
            for s in range(cfg.switches):
                counts = self._counts(batch.take(switches == s))
                es = EstimateSet(exact_estimates(counts, prev_local.get(s), plan), Scope.LOCAL, e, (e + 1) * E, switch=s)
                self.rows += estimate_rows(es, s, counts.n, 0, plan)
                prev_local[s] = counts
            if e % cfg.sync_period == 0:
                counts = self._counts(batch)
                es = EstimateSet(exact_estimates(counts, prev_global, plan), Scope.GLOBAL, e, (e + 1) * E, round=e // cfg.sync_period)
                self.rows += estimate_rows(es, CENTRAL_ID, counts.n, 0, plan)
                prev_global = counts
        manifest = {
            "command": "oracle",
            "config": cfg.to_dict(),
            "epochs": self.stream.n_epochs,
            "trace_rows": len(self.rows),
        }
        if cfg.cache:
            manifest["cache_stationary_epochs"] = stationary
            manifest["cache_clairvoyant_keys"] = len(cache_keys)
        if cfg.reshard:
            manifest["mean_imbalance"] = ledger.mean_imbalance()
        return self.rows, manifest


def run_oracle(cfg: RunConfig) -> tuple[list[tuple], dict]:
    return Oracle(cfg).run()
