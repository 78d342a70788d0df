"""Closed-loop replay: workload → data planes → controllers → services.

Time is the global record index. One epoch spans ``epoch_ticks`` records
across the whole fabric; every switch rotates at the same boundary.
Sync messages travel through an event queue with per-kind delays; queued
events are handled at epoch boundaries in timestamp order, and anything
they change (partition maps, caches) takes effect from the next epoch.

Trace rows are ``epoch,scope,switch,dimension,metric,value,staleness``
with staleness in ticks.
"""

from __future__ import annotations

import csv
import heapq
import io
import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .config import AttributeConfig, RunConfig
from .control import CENTRAL_ID, SyncMessage
from .errors import NotYetAvailable
from .estimates import Absent, EstimateSet, Metric, MetricPlan
from .northbound import EstimateBuffer, NorthboundAPI, Timing
from .services import CacheService, LoadLedger, PartitionMap, ReshardService, uniform_map
from .topology import Fabric
from .workload import generate

TRACE_COLUMNS = ("epoch", "scope", "switch", "dimension", "metric", "value", "staleness")

_UPLOAD, _SYNC, _DOWNLOAD = 0, 1, 2


def fmt_value(v) -> str:
    if isinstance(v, Absent):
        return "absent"
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def estimate_rows(es: EstimateSet, switch: int, records: int, staleness: int, plan) -> list[tuple]:
    """Flatten one estimate set into trace rows (histograms are summarized by quantiles)."""
    rows = [(es.epoch, es.scope.value, switch, "", "records", str(records), staleness)]
    for dim, metric in plan.pairs():
        if (dim, metric) not in es.entries:
            continue
        v = es.entries[(dim, metric)]
        if metric is Metric.HEAVY_HITTERS:
            if isinstance(v, Absent):
                rows.append((es.epoch, es.scope.value, switch, dim, "hh", "absent", staleness))
            for key, est in v if not isinstance(v, Absent) else ():
                rows.append((es.epoch, es.scope.value, switch, dim, f"hh:{key}", str(est), staleness))
        elif metric is Metric.QUANTILES:
            if isinstance(v, Absent):
                for q in plan.quantiles:
                    rows.append((es.epoch, es.scope.value, switch, dim, f"quantile_{q}", "absent", staleness))
            else:
                for q, val in v:
                    rows.append((es.epoch, es.scope.value, switch, dim, f"quantile_{q}", fmt_value(val), staleness))
        elif metric is Metric.HISTOGRAM:
            continue
        else:
            rows.append((es.epoch, es.scope.value, switch, dim, metric.value, fmt_value(v), staleness))
    return rows


def write_trace(path: str, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(trace_text(rows))


def trace_text(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    w.writerows(rows)
    return buf.getvalue()


def write_manifest(path: str, manifest: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def config_plan(cfg: RunConfig) -> MetricPlan:
    """The metric plan a simulation of ``cfg`` ends up with once every subscription is in place."""
    metrics: dict[str, set] = {}
    for a in cfg.attribute_list():
        metrics.setdefault(a.name, set()).update(Metric.parse(m) for m in a.metrics)
    if cfg.reshard:
        metrics.setdefault(cfg.reshard_dim, set()).update((Metric.HISTOGRAM, Metric.CHANGE))
    if cfg.cache:
        metrics.setdefault(cfg.cache_dim, set()).add(Metric.HEAVY_HITTERS)
    thresholds = {cfg.cache_dim: cfg.cache_hh_threshold} if cfg.cache else {}
    return MetricPlan(
        tuple(cfg.telemetry_dims()),
        {k: frozenset(v) for k, v in metrics.items()},
        cfg.hh_threshold,
        tuple(cfg.quantiles),
        thresholds,
    )


@dataclass
class SimResult:
    rows: list[tuple]
    manifest: dict
    fabric: Fabric
    api: NorthboundAPI
    reshard: ReshardService | None = None
    ledger: LoadLedger | None = None
    static_ledger: LoadLedger | None = None
    cache: CacheService | None = None
    frozen_cache: CacheService | None = None
    hit_rates: list[tuple[int, float, float]] = field(default_factory=list)
    global_sets: list[EstimateSet] = field(default_factory=list)
    download_ages: list[tuple[int, int, int]] = field(default_factory=list)
    download_checks: list[tuple[int, int, bool]] = field(default_factory=list)
    stream: object = None


class Simulation:
    def __init__(self, cfg: RunConfig):
        cfg.validate()
        self.cfg = cfg
        self.stream = generate(cfg.schedule(), cfg.records, cfg.n_nodes)
        self.fabric = Fabric(
            cfg.switches,
            cfg.nodes_per_switch,
            cfg.geometry(),
            cfg.epoch_ticks,
            cfg.sync_period,
            p=cfg.p,
            histogram_buckets=cfg.histogram_buckets,
            refresh_every=cfg.refresh_every,
            sampling_seed=cfg.sampling_seed(),
            hh_threshold=cfg.hh_threshold,
            quantiles=cfg.quantiles,
        )
        self.api = NorthboundAPI(self.fabric)
        self.subscriptions = []
        for attr in cfg.attribute_list():
            sub = self.api.set_attributes([cfg.attribute_spec(attr)], attr.metrics, attr.timing)
            self.api.get_estimates(sub, EstimateBuffer(attr.buffer), lambda buf: None)
            self.subscriptions.append(sub)

        self.reshard = self.ledger = self.static_ledger = None
        self.adaptive_map = self.static_map = self._pending_map = None
        if cfg.reshard:
            spec = cfg.attribute_spec(self._attr(cfg.reshard_dim))
            self.ledger = LoadLedger(cfg.n_nodes)
            self.static_ledger = LoadLedger(cfg.n_nodes)
            self.reshard = ReshardService(
                cfg.reshard_dim,
                cfg.n_nodes,
                self.ledger,
                window=cfg.window,
                theta=cfg.theta,
                change_factor=cfg.change_factor,
                trailing=cfg.trailing,
            )
            self.adaptive_map = self.static_map = uniform_map(cfg.reshard_dim, spec.domain, cfg.n_nodes)
            sub = self.api.set_attributes([spec], [Metric.HISTOGRAM, Metric.CHANGE], Timing.LOOSE)
            self.api.get_estimates(sub, EstimateBuffer(4), self._on_reshard_estimates)

        self.cache = self.frozen_cache = None
        if cfg.cache:
            spec = cfg.attribute_spec(self._attr(cfg.cache_dim))
            self.cache_domain = spec.domain
            self.fabric.set_hh_threshold(cfg.cache_dim, cfg.cache_hh_threshold)
            self.cache = CacheService(cfg.cache_dim, cfg.cache_capacity, refresh=True)
            self.frozen_cache = CacheService(cfg.cache_dim, cfg.cache_capacity, refresh=False)
            sub = self.api.set_attributes([spec], [Metric.HEAVY_HITTERS], Timing.LOOSE)
            self.api.get_estimates(sub, EstimateBuffer(4), self._on_cache_estimates)

        self._events: list = []
        self._seq = itertools.count()
        self._inbox: dict[int, list[bytes]] = {}
        self._last_local: dict[int, int] = {}
        self._last_global: int | None = None
        self.rows: list[tuple] = []
        self.late_uploads = 0
        self.skipped_rounds = 0
        self.result_extra = {"global_sets": [], "download_ages": [], "hit_rates": [], "download_checks": []}
        self._round_sets: dict[int, EstimateSet] = {}

    def _attr(self, name: str):
        for a in self.cfg.attribute_list():
            if a.name == name:
                return a
        return AttributeConfig(name)

    # -- service callbacks ----------------------------------------------
    def _on_reshard_estimates(self, buffer: EstimateBuffer) -> None:
        new = self.reshard.step(buffer.latest())
        if new is not None:
            self._pending_map = new

    def _on_cache_estimates(self, buffer: EstimateBuffer) -> None:
        es = buffer.latest()
        self.cache.step(es)
        self.frozen_cache.step(es)

    # -- event queue ----------------------------------------------------
    def _push(self, when: int, kind: int, payload) -> None:
        heapq.heappush(self._events, (when, kind, next(self._seq), payload))

    def _drain(self, upto: float) -> None:
        while self._events and self._events[0][0] <= upto:
            when, kind, _, payload = heapq.heappop(self._events)
            if kind == _UPLOAD:
                rnd, frame = payload
                if rnd in self._inbox:
                    self._inbox[rnd].append(frame)
                else:
                    self.late_uploads += 1
            elif kind == _SYNC:
                self._sync(payload, when)
            else:
                switch, frame = payload
                lc = self.fabric.locals[switch]
                prev = lc.latest_global
                age = when - prev.produced_at if prev is not None else 0
                rnd = SyncMessage.decode(frame).round
                if lc.receive(frame):
                    self.result_extra["download_ages"].append((switch, rnd, age))
                    produced = self._round_sets.get(rnd)
                    same = produced is not None and lc.latest_global.entries == produced.entries
                    self.result_extra["download_checks"].append((switch, rnd, same))
                    self.rows.append((lc.latest_global.epoch, "global", switch, "", "download_round", str(rnd), age))

    def _sync(self, rnd: int, now: int) -> None:
        central = self.fabric.central
        uploads = self._inbox.pop(rnd)
        try:
            gs, downloads = central.sync_round(rnd, uploads, now)
        except NotYetAvailable:
            # nothing has reached the central controller yet; the round produces no global set
            self.skipped_rounds += 1
            self.rows.append((now // self.cfg.epoch_ticks - 1, "global", CENTRAL_ID, "", "sync_skipped", str(rnd), 0))
            return
        staleness = now - self._last_global if self._last_global is not None else 0
        self._last_global = now
        self.rows += estimate_rows(gs, CENTRAL_ID, central.merged.records, staleness, self.fabric.plan)
        if gs.degraded:
            self.rows.append((gs.epoch, "global", CENTRAL_ID, "", "stale_members", str(len(gs.stale_members)), staleness))
        self.result_extra["global_sets"].append(gs)
        self._round_sets = {rnd: gs}
        self.api.deliver(gs, now)
        for switch, msg in downloads:
            self._push(now + self.cfg.download_delay, _DOWNLOAD, (switch, msg.encode()))

    # -- main loop ------------------------------------------------------
    def run(self) -> SimResult:
        cfg, fabric = self.cfg, self.fabric
        E = cfg.epoch_ticks
        for e in range(self.stream.n_epochs):
            if self._pending_map is not None:
                if self.adaptive_map is None or self._pending_map.version > self.adaptive_map.version:
                    self.adaptive_map = self._pending_map
                    if self.static_map.version == 0:
                        self.static_map = self._pending_map
                self._pending_map = None
            batch = self.stream.epoch_batch(e)
            self._run_services(e, batch)
            switches = fabric.switch_of(batch.sources)
            for s, dp in enumerate(fabric.dataplanes):
                dp.observe_batch(batch.take(switches == s))
            end = (e + 1) * E
            self._drain(end)
            for s, dp in enumerate(fabric.dataplanes):
                snap = dp.rotate_epoch()
                es = fabric.locals[s].local_compute(snap, end)
                staleness = end - self._last_local[s] if s in self._last_local else 0
                self._last_local[s] = end
                self.rows += estimate_rows(es, s, snap.sketch.records, staleness, fabric.plan)
                self.api.deliver(es, end)
            if e % cfg.sync_period == 0:
                rnd = e // cfg.sync_period
                self._inbox[rnd] = []
                for s, lc in enumerate(fabric.locals):
                    self._push(end + cfg.upload_delay, _UPLOAD, (rnd, lc.upload(rnd).encode()))
                self._push(end + cfg.sync_timeout, _SYNC, rnd)
            self._drain(end)
        self._drain(float("inf"))
        return self._result()

    def _run_services(self, e: int, batch) -> None:
        cfg = self.cfg
        if self.reshard is not None:
            vals = batch.values[cfg.reshard_dim]
            loads = self.ledger.record(e, self.adaptive_map.route_many(vals))
            static = self.static_ledger.record(e, self.static_map.route_many(vals))
            for node, c in enumerate(loads.tolist()):
                self.rows.append((e, "node", node, cfg.reshard_dim, "load", str(c), 0))
            self.rows.append((e, "service", -1, cfg.reshard_dim, "imbalance", fmt_value(LoadLedger.imbalance_of(loads)), 0))
            self.rows.append((e, "service", -1, cfg.reshard_dim, "imbalance_static", fmt_value(LoadLedger.imbalance_of(static)), 0))
            self.rows.append((e, "service", -1, cfg.reshard_dim, "map_version", str(self.adaptive_map.version), 0))
        if self.cache is not None:
            keys = self.cache_domain.quantize(batch.values[cfg.cache_dim])
            n = max(len(keys), 1)
            hit = self.cache.cache.lookup_many(keys) / n
            frozen = self.frozen_cache.cache.lookup_many(keys) / n
            self.result_extra["hit_rates"].append((e, hit, frozen))
            self.rows.append((e, "service", -1, cfg.cache_dim, "cache_hit_rate", fmt_value(hit), 0))
            self.rows.append((e, "service", -1, cfg.cache_dim, "cache_hit_rate_frozen", fmt_value(frozen), 0))

    def _result(self) -> SimResult:
        manifest = {
            "command": "simulate",
            "config": self.cfg.to_dict(),
            "epochs": self.stream.n_epochs,
            "sync_rounds": len(self.result_extra["global_sets"]),
            "late_uploads": self.late_uploads,
            "skipped_rounds": self.skipped_rounds,
            "trace_rows": len(self.rows),
        }
        if self.reshard is not None:
            manifest["reshard_events"] = [
                {
                    "epoch": ev.epoch,
                    "version": ev.version,
                    "reason": ev.reason,
                    "moved_fraction": ev.moved_fraction,
                    "change": ev.change,
                }
                for ev in self.reshard.events
            ]
            manifest["mean_imbalance"] = self.ledger.mean_imbalance()
            manifest["mean_imbalance_static"] = self.static_ledger.mean_imbalance()
            if self.adaptive_map is not None:
                manifest["final_map"] = self.adaptive_map.to_text()
        if self.cache is not None:
            manifest["cache_hit_rate"] = self.cache.cache.hit_rate
            manifest["cache_hit_rate_frozen"] = self.frozen_cache.cache.hit_rate
        subs = {}
        for sub in self.api.subscriptions.values():
            subs[str(sub.id)] = {
                "attributes": [a.name for a in sub.attributes],
                "metrics": sorted(m.value for m in sub.metrics),
                "timing": sub.timing.value,
                "callbacks": sub.callbacks,
                "overwritten": sub.buffer.overwritten if sub.buffer else 0,
                "max_staleness": {f"{s.value}:{w}": v for (s, w), v in sorted(sub.max_staleness.items(), key=str)},
            }
        manifest["subscriptions"] = subs
        return SimResult(
            rows=self.rows,
            manifest=manifest,
            fabric=self.fabric,
            api=self.api,
            reshard=self.reshard,
            ledger=self.ledger,
            static_ledger=self.static_ledger,
            cache=self.cache,
            frozen_cache=self.frozen_cache,
            hit_rates=self.result_extra["hit_rates"],
            global_sets=self.result_extra["global_sets"],
            download_ages=self.result_extra["download_ages"],
            download_checks=self.result_extra["download_checks"],
            stream=self.stream,
        )


def simulate(cfg: RunConfig) -> SimResult:
    return Simulation(cfg).run()
