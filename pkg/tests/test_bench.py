import numpy as np

from telemloop.bench import _stream_keys, run_layouts, sketch_bench, skew_mix
from telemloop.sketch.universal import SketchGeometry

GEOM = SketchGeometry(rows=5, width=1024, levels=12, dims=1, capacity=64, seed=3)


def test_single_dimension_layouts_coincide():
    keys = _stream_keys(skew_mix()[:1], 20_000, seed=4)
    for p in (1.0, 0.5):
        sep, mer = run_layouts(GEOM, keys, p, sampling_seed=9)
        a, b = sep.as_dict(), mer.as_dict()
        for k in ("layout",):
            a.pop(k), b.pop(k)
        assert a == b


def test_sampling_cuts_row_hashes_tenfold():
    keys = _stream_keys(skew_mix(), 50_000, seed=2)
    full = run_layouts(GEOM, keys, 1.0, sampling_seed=1)[1]
    sampled = run_layouts(GEOM, keys, 0.1, sampling_seed=1)[1]
    ratio = full.row_hash_calls / sampled.row_hash_calls
    assert 8.0 <= ratio <= 12.0
    assert full.hash_calls / sampled.hash_calls >= 6.0


def test_equal_memory_budget():
    results = sketch_bench(GEOM, n_records=5000, probabilities=(1.0,))
    sep, mer = results
    assert mer.memory_bytes <= sep.memory_bytes
    assert np.isfinite(sep.average_error) and np.isfinite(mer.average_error)
