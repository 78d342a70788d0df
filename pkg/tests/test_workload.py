import dataclasses

import numpy as np
import pytest
from scipy.stats import ks_2samp

from telemloop.workload import DimSchedule, DriftSchedule, generate, sample_dimension

from conftest import exact_entropy


def test_stationary_without_drift():
    for dim in (DimSchedule("e", dist="lognormal"), DimSchedule("k", dist="zipf", zipf_s=1.1, universe=1000)):
        a = sample_dimension(dim, 0, 0, 5000, seed=3)
        b = sample_dimension(dim, 0, 100, 5000, seed=3)
        assert ks_2samp(a, b).pvalue > 0.01


def test_abrupt_shift_moves_mean_by_delta():
    base = DimSchedule("e", dist="lognormal", mu=0.0, sigma=0.5)
    shifted = dataclasses.replace(base, shift_epoch=50, shift_delta=10.0)
    before = sample_dimension(shifted, 0, 49, 20_000, seed=1)
    at = sample_dimension(shifted, 0, 50, 20_000, seed=1)
    same_draws = sample_dimension(base, 0, 50, 20_000, seed=1)
    assert np.array_equal(before, sample_dimension(base, 0, 49, 20_000, seed=1))
    assert at.mean() - same_draws.mean() == pytest.approx(10.0, abs=1e-9)
    assert at.mean() - before.mean() == pytest.approx(10.0, abs=0.1)


def test_zipf_shift_wraps():
    dim = DimSchedule("k", dist="zipf", universe=100, shift_epoch=0, shift_delta=95)
    vals = sample_dimension(dim, 0, 3, 1000, seed=2)
    assert vals.min() >= 0 and vals.max() < 100


def test_concentration_lowers_entropy_every_epoch():
    dim = DimSchedule("e", dist="lognormal", conc_start=2, conc_end=11, conc_max=0.8)
    dom = dim.domain()
    ent = [exact_entropy(dom.quantize(sample_dimension(dim, 0, e, 20_000, seed=5))) for e in range(2, 12)]
    assert all(b < a for a, b in zip(ent, ent[1:]))


def test_stream_is_replayable_and_ordered():
    sched = DriftSchedule((DimSchedule("a"), DimSchedule("b", dist="zipf")), seed=9, epoch_records=300)
    s1, s2 = generate(sched, 1000, 4), generate(sched, 1000, 4)
    assert s1.n_epochs == 4
    recs = list(s1.records())
    assert len(recs) == 1000
    assert [r.timestamp for r in recs] == sorted(r.timestamp for r in recs)
    assert all(set(r.values) == {"a", "b"} for r in recs)
    assert [r.source for r in recs[:6]] == [0, 1, 2, 3, 0, 1]
    for e in range(4):
        b1, b2 = s1.epoch_batch(e), s2.epoch_batch(e)
        assert all(np.array_equal(b1.values[k], b2.values[k]) for k in b1.values)
    assert len(s1.epoch_batch(3)) == 100


def test_schedule_validation():
    with pytest.raises(ValueError):
        DimSchedule("x", dist="gamma")
    with pytest.raises(ValueError):
        DimSchedule("x", dist="mixture")
    with pytest.raises(ValueError):
        DriftSchedule((DimSchedule("x"), DimSchedule("x")))
    with pytest.raises(ValueError):
        DimSchedule("x", conc_start=5, conc_end=2)
