"""Small builders shared by the controller and API tests."""

import numpy as np

from telemloop.dataplane import SwitchDataPlane
from telemloop.estimates import Metric, MetricPlan
from telemloop.sketch.histogram import ValueDomain
from telemloop.sketch.universal import SketchGeometry
from telemloop.workload import RecordBatch

GEOM = SketchGeometry(rows=5, width=2048, levels=16, dims=2, capacity=64, seed=21)
DOMAIN = ValueDomain(0.0, 65536.0)
ALL = frozenset(Metric) - {Metric.HISTOGRAM}


def plan(dims=("a",), metrics=ALL, **kw):
    return MetricPlan(tuple(dims), {d: frozenset(metrics) for d in dims}, **kw)


def dataplane(switch=0, dims=("a",), epoch_ticks=10**9, geom=GEOM, **kw):
    dp = SwitchDataPlane(switch, [switch], geom, epoch_ticks, **kw)
    for d in dims:
        dp.configure(d, DOMAIN)
    return dp


def batch(values: dict, start: int = 0, epoch: int = 0, source: int = 0) -> RecordBatch:
    n = len(next(iter(values.values())))
    ts = np.arange(start, start + n, dtype=np.int64)
    return RecordBatch(
        epoch,
        ts.astype(np.uint64),
        ts,
        {k: np.asarray(v, dtype=np.float64) for k, v in values.items()},
        np.full(n, source, dtype=np.int64),
    )
