import dataclasses
import statistics

import numpy as np
import pytest

from telemloop.errors import DomainError, GeometryMismatch
from telemloop.hashing import dim_salt, hash_int
from telemloop.sketch.reference import UniversalSketch
from telemloop.sketch.universal import (
    CARDINALITY,
    ENTROPY,
    L2,
    MergedUnivSketch,
    SketchGeometry,
    diff_l2,
    merge,
    merge_all,
    moment,
)

from conftest import exact_counts, exact_entropy, zipf_keys


def feed(sk, keys, dim=0):
    sk.update_records([dim], np.asarray(keys, dtype=np.uint64).reshape(-1, 1))
    return sk


def test_geometry_validation():
    for bad in (dict(rows=0), dict(width=1000), dict(levels=0), dict(levels=65), dict(dims=0), dict(capacity=0)):
        with pytest.raises(ValueError):
            SketchGeometry(**bad)


def test_empty_dimension():
    sk = MergedUnivSketch(SketchGeometry(dims=2, width=256, levels=8))
    assert sk.univ_gsum(0, CARDINALITY) == 0.0
    assert sk.univ_gsum(1, L2) == 0.0
    assert sk.heavy_hitters(0, 0.01) == []
    with pytest.raises(DomainError):
        sk.entropy(0)


def test_lone_key_gsums(small_geometry):
    sk = feed(MergedUnivSketch(small_geometry), [9] * 300)
    assert sk.univ_gsum(0, L2) == 300.0**2
    assert sk.cardinality(0) == 1.0
    assert sk.entropy(0) == 0.0
    assert sk.heavy_hitters(0, 0.5) == [(9, 300)]


def test_two_equal_keys_entropy(small_geometry):
    sk = feed(MergedUnivSketch(small_geometry), [1] * 500 + [2] * 500)
    assert abs(sk.entropy(0) - 1.0) <= 0.05


def test_zipf_entropy_and_heavy_hitters():
    geom = SketchGeometry(rows=5, width=2048, levels=16, dims=1, capacity=64, seed=4)
    keys = zipf_keys(200_000, 10_000, 1.1, seed=8)
    sk = feed(MergedUnivSketch(geom), keys)
    h = exact_entropy(keys)
    assert abs(sk.entropy(0) - h) / h <= 0.10
    truth = exact_counts(keys)
    true_hh = {k for k, c in truth.items() if c >= 0.01 * len(keys)}
    est_hh = {k for k, _ in sk.heavy_hitters(0, 0.01)}
    tp = len(true_hh & est_hh)
    assert tp / len(est_hh) >= 0.9 and tp / len(true_hh) >= 0.9


def test_stream_length_is_exact(small_geometry):
    geom = dataclasses.replace(small_geometry, dims=3)
    sk = MergedUnivSketch(geom)
    sk.update_records([0, 2], np.ones((40, 2), dtype=np.uint64), np.full(40, 3))
    sk.update(1, 5, weight=2)
    assert sk.m == [120, 2, 120]


def test_dimensions_do_not_share_keys():
    geom = SketchGeometry(rows=5, width=4096, levels=8, dims=2, capacity=8, seed=2)
    sk = MergedUnivSketch(geom)
    for _ in range(30):
        sk.update(0, 42)
    for _ in range(70):
        sk.update(1, 42)
    assert sk.estimate(0, 42) == 30
    assert sk.estimate(1, 42) == 70
    assert sk.heavy_hitters(0, 0.5) == [(42, 30)]
    assert sk.heavy_hitters(1, 0.5) == [(42, 70)]


def test_degenerate_matches_reference(small_geometry):
    keys = zipf_keys(6000, 800, 1.1, seed=3)
    merged = feed(MergedUnivSketch(small_geometry), keys)
    ref = UniversalSketch(small_geometry, salt=dim_salt(0))
    for k in keys.tolist():
        ref.update(k)
    merged.flush()
    ref.flush()
    assert merged.counters.tolist() == ref.counters
    assert merged.m[0] == ref.m
    for j in range(small_geometry.levels):
        assert merged.trackers[0][j].items() == ref.trackers[j]
    assert merged.entropy(0) == ref.entropy()
    assert merged.cardinality(0) == ref.gsum(CARDINALITY)


def test_tracker_invariants(small_geometry):
    keys = zipf_keys(20_000, 5000, 0.9, seed=6)
    sk = feed(MergedUnivSketch(small_geometry), keys)
    sk.flush()
    salt = sk.salts[0]
    seen = set(keys.tolist())
    for j, tr in enumerate(sk.trackers[0]):
        assert len(tr) <= small_geometry.capacity
        for k in tr.keys.tolist():
            assert k in seen
            assert all(hash_int(k ^ salt, sk.level_seeds[i]) >> 63 == 1 for i in range(1, j + 1))


def test_merge_identity(small_geometry):
    s = feed(MergedUnivSketch(small_geometry), zipf_keys(3000, 400, 1.2, seed=1))
    out = merge(MergedUnivSketch(small_geometry), s)
    assert np.array_equal(out.counters, s.counters)
    assert out.m == s.m
    assert out.state_equal(s)


def test_merge_rejects_mismatch(small_geometry):
    a = MergedUnivSketch(small_geometry)
    b = MergedUnivSketch(dataclasses.replace(small_geometry, seed=99))
    with pytest.raises(GeometryMismatch):
        merge(a, b)
    with pytest.raises(GeometryMismatch):
        diff_l2(a, b)


def test_merge_all_sums_counters(small_geometry):
    parts = [feed(MergedUnivSketch(small_geometry), zipf_keys(1000, 300, 1.0, seed=s)) for s in range(3)]
    whole = feed(MergedUnivSketch(small_geometry), np.concatenate([zipf_keys(1000, 300, 1.0, seed=s) for s in range(3)]))
    out = merge_all(parts)
    assert np.array_equal(out.counters, whole.counters)
    assert out.m == whole.m


def test_change_score_lone_keys():
    geom = SketchGeometry(rows=5, width=4096, levels=4, dims=1, capacity=4, seed=1)
    a = feed(MergedUnivSketch(geom), [1] * 30)
    b = feed(MergedUnivSketch(geom), [2] * 40)
    assert diff_l2(a, a) == 0.0
    assert diff_l2(a, b) == 50.0


def test_change_score_detects_shift():
    geom = SketchGeometry(rows=5, width=2048, levels=8, dims=1, capacity=16, seed=1)
    epochs = [zipf_keys(4000, 10_000, 1.1, seed=100 + e) for e in range(12)]
    epochs[10] = (epochs[10] + np.uint64(5000)) % np.uint64(10_000)
    sks = [feed(MergedUnivSketch(geom), k) for k in epochs]
    scores = [diff_l2(sks[e], sks[e - 1]) for e in range(1, 12)]
    stable = statistics.median(scores[:9])
    assert scores[9] >= 5 * stable


def test_moments_and_kinds():
    with pytest.raises(ValueError):
        moment(-1)
    assert moment(2).g(np.array([3]))[0] == 9.0
    assert ENTROPY.g(np.array([1]))[0] == 0.0
    sk = MergedUnivSketch(SketchGeometry(width=256, levels=4))
    with pytest.raises(ValueError):
        sk.univ_gsum(0, moment(5))


def test_forced_sampler_at_p1_is_exact(small_geometry):
    keys = zipf_keys(5000, 700, 1.1, seed=2)
    plain = feed(MergedUnivSketch(small_geometry), keys)
    forced = feed(MergedUnivSketch(small_geometry, p=1.0, _force_sampler=True), keys)
    assert plain.state_equal(forced)


def test_one_draw_per_record_and_row():
    keys = zipf_keys(20_000, 2000, 1.1, seed=2)
    g1 = SketchGeometry(rows=5, width=1024, levels=8, dims=1, capacity=16, seed=3)
    g3 = dataclasses.replace(g1, dims=3)
    one = MergedUnivSketch(g1, p=0.1, sampling_seed=77)
    three = MergedUnivSketch(g3, p=0.1, sampling_seed=77)
    one.update_records([0], keys.reshape(-1, 1))
    three.update_records([0, 1, 2], np.stack([keys, keys, keys], axis=1))
    assert one.sampler.draws == three.sampler.draws
    # roughly one geometric gap per selected (record, row) cell
    assert abs(one.sampler.draws - 0.1 * 5 * len(keys)) < 0.05 * 0.1 * 5 * len(keys)


def test_sampling_reduces_row_hashes():
    keys = zipf_keys(200_000, 10_000, 1.1, seed=9)
    geom = SketchGeometry(rows=5, width=2048, levels=16, dims=1, capacity=64, seed=5)
    full = feed(MergedUnivSketch(geom), keys)
    sampled = feed(MergedUnivSketch(geom, p=0.1, sampling_seed=1), keys)
    assert sampled.row_hash_calls <= 0.15 * full.row_hash_calls
    assert sampled.m == full.m
