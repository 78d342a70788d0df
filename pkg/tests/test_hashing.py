import numpy as np
from hypothesis import given, strategies as st

from telemloop.hashing import derive_seeds, dim_salt, hash_array, hash_int, named_seed, splitmix64

u64 = st.integers(min_value=0, max_value=2**64 - 1)


@given(st.lists(u64, min_size=1, max_size=50), u64)
def test_vector_hash_matches_scalar(keys, seed):
    vec = hash_array(np.array(keys, dtype=np.uint64), seed)
    assert vec.tolist() == [hash_int(k, seed) for k in keys]


def test_elementwise_seeds():
    keys = np.array([1, 2, 3], dtype=np.uint64)
    seeds = np.array([7, 8, 9], dtype=np.uint64)
    assert hash_array(keys, seeds).tolist() == [hash_int(1, 7), hash_int(2, 8), hash_int(3, 9)]


def test_seed_derivation_is_stable_and_distinct():
    a = derive_seeds(42, 16)
    assert a == derive_seeds(42, 16)
    assert len(set(a)) == 16
    assert derive_seeds(42, 4, offset=2) == a[2:6]


def test_named_seeds_differ_by_name():
    names = ["workload", "sketch", "sampling"]
    seeds = [named_seed(1, n) for n in names]
    assert len(set(seeds)) == 3
    assert named_seed(1, "sketch") != named_seed(2, "sketch")


def test_dim_salts_distinct():
    assert len({dim_salt(d) for d in range(64)}) == 64
    assert dim_salt(0) == splitmix64(1)
