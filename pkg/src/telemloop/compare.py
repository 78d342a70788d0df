"""Diff a simulated trace against the oracle trace of the same config."""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .sketch.histogram import DimHistogram, ValueDomain


def read_trace(source) -> list[tuple]:
    """Rows of a trace given as a path, CSV text, or already-built row tuples."""
    if isinstance(source, list):
        return [tuple(str(x) for x in r) for r in source]
    text = source
    if "\n" not in source:
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
    rows = list(csv.reader(io.StringIO(text)))
    return [tuple(r) for r in rows[1:]]


class TraceIndex:
    """Groups trace rows by (epoch, scope, switch)."""

    def __init__(self, rows):
        self.sets: dict[tuple, dict] = defaultdict(dict)
        for epoch, scope, switch, dim, metric, value, _ in read_trace(rows):
            self.sets[(int(epoch), scope, int(switch))][(dim, metric)] = value

    def keys(self, scope: str | None = None) -> list[tuple]:
        return sorted(k for k in self.sets if scope is None or k[1] == scope)

    def value(self, key: tuple, dim: str, metric: str) -> float | None:
        v = self.sets.get(key, {}).get((dim, metric))
        if v is None or v == "absent":
            return None
        return float(v)

    def heavy(self, key: tuple, dim: str) -> dict[int, float]:
        return {int(m[3:]): float(v) for (d, m), v in self.sets.get(key, {}).items() if d == dim and m.startswith("hh:")}


@dataclass
class AccuracyReport:
    entropy_rel: dict = field(default_factory=lambda: defaultdict(list))
    cardinality_rel: dict = field(default_factory=lambda: defaultdict(list))
    hh_tp: dict = field(default_factory=lambda: defaultdict(int))
    hh_fp: dict = field(default_factory=lambda: defaultdict(int))
    hh_fn: dict = field(default_factory=lambda: defaultdict(int))
    quantile_bucket_err: dict = field(default_factory=lambda: defaultdict(list))

    def precision(self, scope: str) -> float:
        tp, fp = self.hh_tp[scope], self.hh_fp[scope]
        return tp / (tp + fp) if tp + fp else 1.0

    def recall(self, scope: str) -> float:
        tp, fn = self.hh_tp[scope], self.hh_fn[scope]
        return tp / (tp + fn) if tp + fn else 1.0

    def mean(self, table: dict, scope: str) -> float:
        vals = table[scope]
        return float(np.mean(vals)) if vals else 0.0

    def max(self, table: dict, scope: str) -> float:
        vals = table[scope]
        return float(np.max(vals)) if vals else 0.0

    def summary(self) -> dict:
        out = {}
        for scope in sorted(set(self.entropy_rel) | set(self.cardinality_rel) | set(self.hh_tp) | set(self.quantile_bucket_err)):
            out[scope] = {
                "entropy_mean_rel": self.mean(self.entropy_rel, scope),
                "entropy_max_rel": self.max(self.entropy_rel, scope),
                "cardinality_mean_rel": self.mean(self.cardinality_rel, scope),
                "cardinality_max_rel": self.max(self.cardinality_rel, scope),
                "hh_precision": self.precision(scope),
                "hh_recall": self.recall(scope),
                "quantile_max_bucket_err": self.max(self.quantile_bucket_err, scope),
                "sets": len(self.entropy_rel[scope]) + len(self.cardinality_rel[scope]),
            }
        return out


def accuracy(sim_rows, oracle_rows, domains: dict[str, ValueDomain], buckets: int = 256, hh_threshold: float = 0.01) -> AccuracyReport:
    """Compare estimate sets present in both traces.

    Heavy hitters are re-thresholded at ``hh_threshold`` of each set's
    record count on both sides; quantile errors are measured in histogram
    buckets of each dimension's domain.
    """
    sim, ora = TraceIndex(sim_rows), TraceIndex(oracle_rows)
    rep = AccuracyReport()
    hists = {d: DimHistogram(dom, buckets) for d, dom in domains.items()}
    for key in ora.keys():
        scope = key[1]
        if scope not in ("local", "global") or key not in sim.sets:
            continue
        m_sim = sim.value(key, "", "records") or 0.0
        m_ora = ora.value(key, "", "records") or 0.0
        for dim in domains:
            e_true, e_est = ora.value(key, dim, "entropy"), sim.value(key, dim, "entropy")
            if e_true is not None and e_est is not None and e_true > 0:
                rep.entropy_rel[scope].append(abs(e_est - e_true) / e_true)
            c_true, c_est = ora.value(key, dim, "cardinality"), sim.value(key, dim, "cardinality")
            if c_true is not None and c_est is not None and c_true > 0:
                rep.cardinality_rel[scope].append(abs(c_est - c_true) / c_true)
            true_hh = {k for k, v in ora.heavy(key, dim).items() if v >= hh_threshold * m_ora}
            est_hh = {k for k, v in sim.heavy(key, dim).items() if v >= hh_threshold * m_sim}
            rep.hh_tp[scope] += len(true_hh & est_hh)
            rep.hh_fp[scope] += len(est_hh - true_hh)
            rep.hh_fn[scope] += len(true_hh - est_hh)
            for (d, metric) in ora.sets[key]:
                if d != dim or not metric.startswith("quantile_"):
                    continue
                qt, qe = ora.value(key, dim, metric), sim.value(key, dim, metric)
                if qt is None or qe is None:
                    continue
                h = hists[dim]
                rep.quantile_bucket_err[scope].append(abs(int(h.bucket_of([qt])[0]) - int(h.bucket_of([qe])[0])))
    return rep
