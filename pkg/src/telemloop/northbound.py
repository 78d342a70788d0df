"""Service-facing API: attribute registration and buffered estimate delivery.

``set_attributes`` is issued against the central controller and
configures the sketch dimensions of every data plane. Loose
subscriptions receive the global sets produced at each sync round; Tight
subscriptions additionally get the local set of every switch at every
local epoch (tagged with the switch id, filtering is up to the service).

Callbacks run synchronously on the simulator loop, after the new set is
visible in the subscription's buffer.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable

from .errors import CapacityError, UnknownMetric
from .estimates import EstimateSet, Metric, Scope
from .sketch.histogram import ValueDomain


class Timing(str, Enum):
    TIGHT = "tight"
    LOOSE = "loose"

    @classmethod
    def parse(cls, value) -> "Timing":
        if isinstance(value, Timing):
            return value
        return cls(str(value).strip().lower())


@dataclass(frozen=True)
class AttributeSpec:
    name: str
    lo: float
    hi: float
    scale: str = "linear"

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"attribute {self.name!r}: degenerate domain [{self.lo}, {self.hi})")

    @property
    def domain(self) -> ValueDomain:
        return ValueDomain(self.lo, self.hi, self.scale)


class EstimateBuffer:
    """Bounded ring of estimate sets; a full ring overwrites its oldest entry."""

    def __init__(self, capacity: int = 16):
        if capacity < 1:
            raise ValueError("buffer capacity must be positive")
        self.capacity = capacity
        self._ring: deque[EstimateSet] = deque(maxlen=capacity)
        self.overwritten = 0
        self.appended = 0

    def append(self, item: EstimateSet) -> None:
        if len(self._ring) == self.capacity:
            self.overwritten += 1
        self._ring.append(item)
        self.appended += 1

    def latest(self) -> EstimateSet | None:
        return self._ring[-1] if self._ring else None

    def items(self) -> list[EstimateSet]:
        return list(self._ring)

    def __len__(self) -> int:
        return len(self._ring)


@dataclass
class Subscription:
    id: int
    attributes: tuple[AttributeSpec, ...]
    metrics: frozenset
    timing: Timing
    placement: str = "central"
    buffer: EstimateBuffer | None = None
    callback: Callable | None = None
    version: int = 0
    callbacks: int = 0
    max_staleness: dict = field(default_factory=dict)
    _last_seen: dict = field(default_factory=dict, repr=False)

    @property
    def wanted(self) -> set[tuple[str, Metric]]:
        return {(a.name, m) for a in self.attributes for m in self.metrics}

    def accepts(self, es: EstimateSet) -> bool:
        if es.scope is Scope.GLOBAL:
            return True
        return self.timing is Timing.TIGHT

    def view_staleness(self, scope: Scope) -> int:
        return max((v for (s, _), v in self.max_staleness.items() if s is scope), default=0)


class NorthboundAPI:
    """Binds services to a :class:`~telemloop.topology.Fabric`."""

    def __init__(self, fabric):
        self.fabric = fabric
        self.subscriptions: dict[int, Subscription] = {}
        self._ids = itertools.count(1)
        fabric.api = self

    def set_attributes(
        self,
        attribute_list: Iterable[AttributeSpec],
        estimate_list: Iterable,
        timing,
        subscription: Subscription | None = None,
    ) -> Subscription:
        attrs = tuple(attribute_list)
        metrics = frozenset(Metric.parse(m) for m in estimate_list)
        if not metrics:
            raise UnknownMetric("estimate_list is empty")
        if not attrs:
            raise ValueError("attribute_list is empty")
        timing = Timing.parse(timing)
        new = [a for a in attrs if a.name not in self.fabric.attributes]
        if len(self.fabric.attributes) + len(new) > self.fabric.geometry.dims:
            raise CapacityError(
                f"{len(self.fabric.attributes) + len(new)} attributes exceed the sketch's {self.fabric.geometry.dims} dimensions"
            )
        for a in attrs:
            self.fabric.configure_attribute(a)
        if subscription is None:
            sub = Subscription(next(self._ids), attrs, metrics, timing)
            sub.placement = "local" if timing is Timing.TIGHT else "central"
            self.subscriptions[sub.id] = sub
        else:
            # swap the whole configuration at once; deliveries project with whatever is current
            sub = subscription
            sub.attributes, sub.metrics, sub.timing = attrs, metrics, timing
            sub.placement = "local" if timing is Timing.TIGHT else "central"
            sub.version += 1
        self.fabric.refresh_plan(self.subscriptions.values())
        return sub

    def get_estimates(self, subscription: Subscription, buffer: EstimateBuffer, callback: Callable) -> None:
        if subscription.id not in self.subscriptions:
            raise KeyError(f"unknown subscription {subscription.id}")
        subscription.buffer = buffer
        subscription.callback = callback

    def cancel(self, subscription: Subscription) -> None:
        self.subscriptions.pop(subscription.id, None)
        self.fabric.refresh_plan(self.subscriptions.values())

    def deliver(self, es: EstimateSet, now: int) -> None:
        """Fan a freshly produced estimate set out to matching subscriptions."""
        for sub in list(self.subscriptions.values()):
            if sub.buffer is None or not sub.accepts(es):
                continue
            view = es.project(sub.wanted)
            if not view.entries:
                continue
            key = (es.scope, es.switch)
            prev = sub._last_seen.get(key)
            if prev is not None:
                # age of the subscriber's view just before this delivery replaces it
                age = now - prev
                sub.max_staleness[key] = max(sub.max_staleness.get(key, 0), age)
            sub._last_seen[key] = es.produced_at
            sub.buffer.append(view)
            sub.callbacks += 1
            if sub.callback is not None:
                sub.callback(sub.buffer)
