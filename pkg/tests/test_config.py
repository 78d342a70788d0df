import pytest

from telemloop.config import RunConfig, load_config, parse_config
from telemloop.errors import ConfigError

MINIMAL = """
[workload]
records = 1000
dims = a, b
[dim:b]
dist = mixture
components = 0.6 0.0 0.5; 0.4 2.0 0.3
"""


def test_minimal_config_uses_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.switches == 4 and cfg.width == 2048 and cfg.epoch_records == 1000
    assert [d.name for d in cfg.dims] == ["a", "b"]
    assert cfg.dims[1].components == ((0.6, 0.0, 0.5), (0.4, 2.0, 0.3))
    assert [a.name for a in cfg.attribute_list()] == ["a", "b"]
    assert cfg.geometry().dims == 2


def test_manifest_echo_has_sub_seeds():
    cfg = parse_config(MINIMAL)
    d = cfg.to_dict()
    assert set(d["sub_seeds"]) == {"workload", "sketch", "sampling"}
    assert d["dims"][0]["name"] == "a"
    assert cfg.with_seed(2).to_dict()["sub_seeds"] != d["sub_seeds"]


@pytest.mark.parametrize(
    "text, block, field",
    [
        ("[run]\nseed = 1\n", "workload", None),
        (MINIMAL + "[sketch]\nwidth = 1000\n", "sketch", None),
        (MINIMAL + "[sketch]\ncolour = red\n", "sketch", "colour"),
        (MINIMAL + "[timing]\nsync_period = soon\n", "timing", "sync_period"),
        (MINIMAL + "[bogus]\nx = 1\n", "bogus", None),
        (MINIMAL + "[dim:c]\ndist = zipf\n", "dim:c", None),
        (MINIMAL + "[attribute:zz]\ntiming = loose\n", "attribute:zz", "name"),
        (MINIMAL + "[attribute:a]\nmetrics = variance\n", "attribute:a", "metrics"),
        (MINIMAL + "[attribute:a]\ntiming = eventually\n", "attribute:a", "timing"),
        (MINIMAL + "[services]\nreshard = on\nreshard_dim = nope\n", "services", "reshard_dim"),
        (MINIMAL + "[sketch]\np = 0\n", "sketch", "p"),
    ],
)
def test_invalid_configs_name_the_block(text, block, field):
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert err.value.block == block
    if field:
        assert err.value.field == field


def test_telemetry_dims_include_service_dims():
    cfg = parse_config(
        MINIMAL + "[attribute:a]\nmetrics = entropy\n[services]\ncache = on\ncache_dim = b\nreshard = yes\nreshard_dim = a\n"
    )
    assert cfg.telemetry_dims() == ["a", "b"]


def test_reference_config_loads(reference_config):
    assert reference_config.records == 1_000_000
    assert reference_config.n_nodes == 8
    assert reference_config.epoch_ticks == 4000


def test_unreadable_path():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/ref.cfg")


def test_default_config_is_valid_once_workload_exists():
    with pytest.raises(ConfigError):
        RunConfig().validate()
