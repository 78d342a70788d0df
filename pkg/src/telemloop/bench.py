"""Merged vs per-dimension sketches at equal counter memory.

The separate layout keeps one universal sketch of width ``w`` per
dimension; the merged layout shares one table of width ``D*w`` (rounded
down to a power of two, so it never gets more memory than the separate
layout). Both are driven with the same quantized records at each
sampling probability and scored against exact counts.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .hashing import named_seed
from .sketch.universal import MergedUnivSketch, SketchGeometry
from .workload import DimSchedule, DriftSchedule, generate

DEFAULT_PROBABILITIES = (1.0, 0.5, 0.1)


def skew_mix() -> tuple[DimSchedule, ...]:
    """One strongly skewed dimension and three light-tailed ones."""
    return (
        DimSchedule("heavy", dist="zipf", zipf_s=1.3, universe=10_000),
        DimSchedule("light_a", dist="lognormal", mu=0.0, sigma=1.5),
        DimSchedule("light_b", dist="lognormal", mu=1.0, sigma=2.0),
        DimSchedule("light_c", dist="zipf", zipf_s=0.3, universe=50_000),
    )


@dataclass
class LayoutResult:
    layout: str
    p: float
    memory_bytes: int
    hash_calls: int
    row_hash_calls: int
    counter_updates: int
    entropy_rel: list[float]
    cardinality_rel: list[float]
    hh_precision: float
    hh_recall: float
    hh_abs_errors: list[float]
    hh_rel_errors: list[float]

    @property
    def average_error(self) -> float:
        """Mean of the per-metric mean relative errors (entropy, cardinality, heavy-key frequency)."""
        parts = [_mean(x) for x in (self.entropy_rel, self.cardinality_rel, self.hh_rel_errors) if x]
        return float(np.mean(parts)) if parts else 0.0

    @property
    def hh_mean_abs_error(self) -> float:
        return float(np.mean(self.hh_abs_errors)) if self.hh_abs_errors else 0.0

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["hh_mean_abs_error"] = self.hh_mean_abs_error
        d["average_error"] = self.average_error
        for k in ("hh_abs_errors", "hh_rel_errors", "entropy_rel", "cardinality_rel"):
            d.pop(k)
        d["entropy_mean_rel"] = _mean(self.entropy_rel)
        d["cardinality_mean_rel"] = _mean(self.cardinality_rel)
        return d


def _pow2_floor(x: int) -> int:
    return 1 << (x.bit_length() - 1)


def _stream_keys(dims, n_records: int, seed: int, chunk: int = 50_000) -> np.ndarray:
    sched = DriftSchedule(tuple(dims), seed=seed, epoch_records=chunk)
    stream = generate(sched, n_records, 1)
    doms = [d.domain() for d in dims]
    parts = []
    for b in stream.batches():
        parts.append(np.stack([dom.quantize(b.values[d.name]) for d, dom in zip(dims, doms)], axis=1))
    if not parts:
        return np.zeros((0, len(dims)), dtype=np.uint64)
    return np.concatenate(parts)


def _exact(col: np.ndarray):
    keys, counts = np.unique(col, return_counts=True)
    m = counts.sum()
    p = counts / m if m else counts
    ent = float(-(p * np.log2(p)).sum()) if m else 0.0
    return dict(zip(keys.tolist(), counts.tolist())), ent, len(keys), int(m)


def _score(sketches, dims_index, exact, threshold: float):
    ent_rel, card_rel, abs_err, rel_err = [], [], [], []
    tp = fp = fn = 0
    for d, (sk, local) in enumerate(zip(sketches, dims_index)):
        freqs, ent, card, m = exact[d]
        if m == 0:
            continue
        if ent > 0:
            ent_rel.append(abs(sk.entropy(local) - ent) / ent)
        card_rel.append(abs(sk.cardinality(local) - card) / card)
        true_hh = {k for k, c in freqs.items() if c >= threshold * m}
        est = dict(sk.heavy_hitters(local, threshold))
        tp += len(true_hh & set(est))
        fp += len(set(est) - true_hh)
        fn += len(true_hh - set(est))
        for k in sorted(true_hh):
            e = abs(sk.estimate(local, k) - freqs[k])
            abs_err.append(e)
            rel_err.append(e / freqs[k])
    prec = tp / (tp + fp) if tp + fp else 1.0
    rec = tp / (tp + fn) if tp + fn else 1.0
    return ent_rel, card_rel, prec, rec, abs_err, rel_err


def run_layouts(
    base: SketchGeometry,
    keys: np.ndarray,
    p: float,
    sampling_seed: int,
    threshold: float = 0.01,
    refresh_every: int = 1024,
    exact=None,
) -> tuple[LayoutResult, LayoutResult]:
    """Feed ``keys`` (n x D) to both layouts at sampling probability ``p``."""
    D = keys.shape[1]
    if exact is None:
        exact = [_exact(keys[:, d]) for d in range(D)]
    sep_geom = dataclasses.replace(base, dims=1)
    separate = [
        MergedUnivSketch(sep_geom, p=p, sampling_seed=named_seed(sampling_seed, f"separate:{d}"), refresh_every=refresh_every)
        for d in range(D)
    ]
    for d, sk in enumerate(separate):
        sk.update_records([0], keys[:, d : d + 1])
    merged_geom = dataclasses.replace(base, dims=D, width=_pow2_floor(base.width * D))
    # D = 1 reuses the separate layout's sampling stream so the two layouts coincide
    merged_seed = named_seed(sampling_seed, "separate:0") if D == 1 else named_seed(sampling_seed, "merged")
    merged = MergedUnivSketch(merged_geom, p=p, sampling_seed=merged_seed, refresh_every=refresh_every)
    merged.update_records(range(D), keys)

    def result(name, sks, index):
        ent, card, prec, rec, err, rel = _score(sks, index, exact, threshold)
        return LayoutResult(
            name,
            p,
            sum(s.memory_bytes() for s in set(sks)),
            sum(s.hash_calls for s in set(sks)),
            sum(s.row_hash_calls for s in set(sks)),
            sum(s.counter_updates for s in set(sks)),
            ent,
            card,
            prec,
            rec,
            err,
            rel,
        )

    return (
        result("separate", separate, [0] * D),
        result("merged", [merged] * D, list(range(D))),
    )


def sketch_bench(
    geometry: SketchGeometry,
    dims=None,
    n_records: int = 100_000,
    seed: int = 1,
    probabilities=DEFAULT_PROBABILITIES,
    threshold: float = 0.01,
) -> list[LayoutResult]:
    dims = tuple(dims) if dims else skew_mix()
    keys = _stream_keys(dims, n_records, named_seed(seed, "workload"))
    exact = [_exact(keys[:, d]) for d in range(keys.shape[1])]
    out = []
    for p in probabilities:
        out.extend(run_layouts(geometry, keys, p, named_seed(seed, "sampling"), threshold, exact=exact))
    return out


def format_report(results: list[LayoutResult]) -> str:
    head = f"{'layout':<9} {'p':>4} {'memory':>10} {'hashes':>12} {'row_hashes':>12} {'updates':>12} {'entropy':>8} {'card':>8} {'hh_prec':>7} {'hh_rec':>7} {'hh_abs':>9} {'avg_err':>8}"
    lines = [head]
    for r in results:
        lines.append(
            f"{r.layout:<9} {r.p:>4g} {r.memory_bytes:>10} {r.hash_calls:>12} {r.row_hash_calls:>12} {r.counter_updates:>12} "
            f"{_mean(r.entropy_rel):>8.4f} {_mean(r.cardinality_rel):>8.4f} {r.hh_precision:>7.3f} {r.hh_recall:>7.3f} {r.hh_mean_abs_error:>9.2f} {r.average_error:>8.4f}"
        )
    return "\n".join(lines)


def _mean(vals) -> float:
    return float(np.mean(vals)) if vals else math.nan
