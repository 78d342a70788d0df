import numpy as np
import pytest

from telemloop.dataplane import EpochSnapshot
from telemloop.errors import CapacityError
from telemloop.sketch.universal import diff_l2
from telemloop.workload import Record

from conftest import zipf_keys
from helpers import DOMAIN, batch, dataplane


def test_record_updates_every_configured_dimension():
    dp = dataplane(dims=("a", "b"))
    dp.observe(Record(1, 0, {"a": 3.0, "b": 4.0}, 0))
    assert dp.stats.sketch_updates == 2
    assert dp.stats.histogram_updates == 2
    assert dp.sketch.m == [1, 1]


def test_no_dimensions_counts_packets_only():
    dp = dataplane(dims=())
    dp.observe(Record(1, 0, {"a": 3.0}, 0))
    dp.observe_batch(batch({"a": [1.0, 2.0]}, start=1))
    assert dp.stats.packets == 3
    assert dp.stats.sketch_updates == 0
    assert not dp.sketch.counters.any()


def test_missing_dimension_is_dropped():
    dp = dataplane(dims=("a", "b"))
    dp.observe(Record(1, 0, {"a": 3.0}, 0))
    dp.observe_batch(batch({"a": [1.0, 2.0], "b": [np.nan, 5.0]}, start=1))
    assert dp.stats.drops == 2
    assert dp.sketch.m == [1, 1]


def test_replay_counts_match_exact():
    keys = zipf_keys(10_000, 3000, 1.1, seed=4).astype(np.float64)
    dp = dataplane(dims=("a", "b"))
    dp.observe_batch(batch({"a": keys, "b": keys[::-1]}))
    assert dp.sketch.m == [10_000, 10_000]
    assert dp.histograms["a"].total == 10_000


def test_scalar_and_batch_paths_agree():
    keys = zipf_keys(3000, 500, 1.1, seed=2).astype(np.float64)
    a, b = dataplane(dims=("a",)), dataplane(dims=("a",))
    a.observe_batch(batch({"a": keys}))
    for r in batch({"a": keys}).records():
        b.observe(r)
    assert a.sketch.state_equal(b.sketch)
    assert a.histograms["a"] == b.histograms["a"]


def test_rotation_and_epochs():
    dp = dataplane(epoch_ticks=100)
    empty = dp.rotate_epoch()
    assert not empty.sketch.counters.any()
    second = dp.rotate_epoch()
    assert {empty.epoch.index, second.epoch.index, dp.epoch.index} == {0, 1, 2}
    assert second.epoch.start == empty.epoch.end


def test_records_outside_epoch_rejected():
    dp = dataplane(epoch_ticks=10)
    with pytest.raises(ValueError):
        dp.observe(Record(1, 10, {"a": 1.0}, 0))
    with pytest.raises(ValueError):
        dp.observe_batch(batch({"a": [1.0] * 11}))


def test_capacity_error():
    dp = dataplane(dims=("a", "b"))
    with pytest.raises(CapacityError):
        dp.configure("c", DOMAIN)
    assert dp.configure("a", DOMAIN) == 0


def test_stable_epochs_change_less_than_shift():
    dp = dataplane(epoch_ticks=5000)
    snaps = []
    for e in range(6):
        keys = zipf_keys(5000, 10_000, 1.1, seed=40 + e)
        if e == 5:
            keys = (keys + np.uint64(5000)) % np.uint64(10_000)
        dp.observe_batch(batch({"a": keys.astype(np.float64)}, start=e * 5000, epoch=e))
        snaps.append(dp.rotate_epoch())
    stable = max(diff_l2(snaps[e].sketch, snaps[e - 1].sketch) for e in range(1, 5))
    assert diff_l2(snaps[5].sketch, snaps[4].sketch) >= 5 * stable


def test_snapshot_codec():
    dp = dataplane(dims=("a", "b"), epoch_ticks=1000)
    keys = zipf_keys(1000, 300, 1.0, seed=1).astype(np.float64)
    dp.observe_batch(batch({"a": keys, "b": keys}))
    snap = dp.rotate_epoch()
    back = EpochSnapshot.decode(snap.encode())
    assert back.sketch.state_equal(snap.sketch)
    assert back.attributes == ("a", "b")
    assert back.histograms == snap.histograms
    assert back.epoch == snap.epoch and back.packets == 1000
