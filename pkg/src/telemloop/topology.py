"""The simulated fabric: leaf switches, their local controllers and the central controller."""

from __future__ import annotations

from typing import Iterable

from .control import CentralController, LocalController
from .dataplane import SwitchDataPlane
from .estimates import DEFAULT_QUANTILES, MetricPlan
from .sketch.universal import SketchGeometry


class Fabric:
    """Owns every data plane and controller, and the attribute registry they share.

    Source node ``n`` hangs off switch ``n // nodes_per_switch``.
    """

    def __init__(
        self,
        n_switches: int,
        nodes_per_switch: int,
        geometry: SketchGeometry,
        epoch_ticks: int,
        sync_period: int,
        p: float = 1.0,
        histogram_buckets: int = 256,
        refresh_every: int = 1024,
        sampling_seed: int | None = None,
        hh_threshold: float = 0.01,
        quantiles: tuple[float, ...] = DEFAULT_QUANTILES,
    ):
        if n_switches < 1 or nodes_per_switch < 1:
            raise ValueError("need at least one switch and one node per switch")
        self.n_switches = n_switches
        self.nodes_per_switch = nodes_per_switch
        self.geometry = geometry
        self.epoch_ticks = epoch_ticks
        self.sync_period = sync_period
        self.hh_threshold = hh_threshold
        self.hh_thresholds: dict[str, float] = {}
        self.quantiles = tuple(quantiles)
        self.attributes: dict = {}
        self.dataplanes = [
            SwitchDataPlane(
                s,
                range(s * nodes_per_switch, (s + 1) * nodes_per_switch),
                geometry,
                epoch_ticks,
                p=p,
                histogram_buckets=histogram_buckets,
                refresh_every=refresh_every,
                sampling_seed=sampling_seed,
            )
            for s in range(n_switches)
        ]
        self.plan = MetricPlan((), {}, hh_threshold, self.quantiles)
        self.locals = [LocalController(s, self.plan, epoch_ticks, sync_period) for s in range(n_switches)]
        self.central = CentralController(self.plan, range(n_switches))
        self.api = None

    @property
    def n_nodes(self) -> int:
        return self.n_switches * self.nodes_per_switch

    def switch_of(self, source):
        return source // self.nodes_per_switch

    def configure_attribute(self, spec) -> None:
        known = self.attributes.get(spec.name)
        if known is not None and known != spec:
            raise ValueError(f"attribute {spec.name!r} already registered with domain [{known.lo}, {known.hi})")
        for dp in self.dataplanes:
            dp.configure(spec.name, spec.domain)
        self.attributes[spec.name] = spec

    def set_hh_threshold(self, name: str, threshold: float) -> None:
        self.hh_thresholds[name] = threshold
        self._install(self.plan.metrics)

    def refresh_plan(self, subscriptions: Iterable) -> MetricPlan:
        """Recompute the metric plan as the union of what live subscriptions want."""
        metrics: dict[str, set] = {}
        for sub in subscriptions:
            for attr in sub.attributes:
                metrics.setdefault(attr.name, set()).update(sub.metrics)
        return self._install({k: frozenset(v) for k, v in metrics.items()})

    def _install(self, metrics) -> MetricPlan:
        self.plan = MetricPlan(
            tuple(self.dataplanes[0].attributes),
            dict(metrics),
            self.hh_threshold,
            self.quantiles,
            dict(self.hh_thresholds),
        )
        for lc in self.locals:
            lc.plan = self.plan
        self.central.plan = self.plan
        return self.plan
