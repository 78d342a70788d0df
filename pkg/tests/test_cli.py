import hashlib
import json
import os

import pytest

from telemloop import cli

SMALL = """
[run]
seed = 3
[topology]
switches = 2
nodes_per_switch = 2
[sketch]
width = 512
levels = 10
[timing]
epoch_records = 250
sync_period = 4
[services]
reshard = on
reshard_dim = e
cache = on
cache_dim = k
[workload]
records = 20000
dims = k, e
[dim:k]
dist = zipf
universe = 5000
shift_epoch = 10
shift_delta = 700
[dim:e]
dist = lognormal
conc_start = 3
conc_end = 15
conc_max = 0.3
"""


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "small.cfg"
    p.write_text(SMALL)
    return str(p)


def digest(path):
    return hashlib.sha256(open(path, "rb").read()).hexdigest()


def test_simulate_twice_same_hashes(cfg_path, tmp_path):
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        assert cli.main(["simulate", "--config", cfg_path, "--seed", "7", "--out", str(out), "--quiet"]) == 0
    assert digest(outs[0] / "trace.csv") == digest(outs[1] / "trace.csv")
    manifest = json.loads((outs[0] / "manifest.json").read_text())
    assert manifest["config"]["seed"] == 7
    assert oct(os.stat(outs[0] / "trace.csv").st_mode & 0o777) == oct(0o644)


def test_seed_override_changes_trace(cfg_path, tmp_path):
    cli.main(["simulate", "--config", cfg_path, "--seed", "1", "--out", str(tmp_path / "a"), "--quiet"])
    cli.main(["simulate", "--config", cfg_path, "--seed", "2", "--out", str(tmp_path / "b"), "--quiet"])
    assert digest(tmp_path / "a" / "trace.csv") != digest(tmp_path / "b" / "trace.csv")


def test_missing_workload_block(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[run]\nseed = 1\n")
    out = tmp_path / "out"
    assert cli.main(["simulate", "--config", str(bad), "--out", str(out)]) == 2
    assert "[workload]" in capsys.readouterr().err
    assert not out.exists() or not os.listdir(out)


def test_bad_seed_exit_code(cfg_path):
    assert cli.main(["simulate", "--config", cfg_path, "--seed", "-1"]) == 2


def test_failure_leaves_no_partial_files(cfg_path, tmp_path, monkeypatch):
    def boom(manifest):
        raise RuntimeError("disk full")

    monkeypatch.setattr(cli, "_manifest_text", boom)
    out = tmp_path / "out"
    assert cli.main(["simulate", "--config", cfg_path, "--out", str(out), "--quiet"]) == 1
    assert os.listdir(out) == []


def test_oracle_and_bench_outputs(cfg_path, tmp_path, capsys):
    out = tmp_path / "o"
    assert cli.main(["oracle", "--config", cfg_path, "--out", str(out), "--quiet"]) == 0
    header = (out / "oracle.csv").read_text().splitlines()[0]
    assert header == "epoch,scope,switch,dimension,metric,value,staleness"
    assert (out / "oracle_manifest.json").exists()
    bench = tmp_path / "b"
    assert cli.main(["sketch-bench", "--config", cfg_path, "--records", "5000", "--out", str(bench)]) == 0
    data = json.loads((bench / "bench.json").read_text())
    assert {(r["layout"], r["p"]) for r in data["results"]} == {(l, p) for l in ("separate", "merged") for p in (1.0, 0.5, 0.1)}
    assert "avg_err" in capsys.readouterr().out


def test_module_entry_point_parses_help():
    with pytest.raises(SystemExit) as exc:
        cli.main(["--help"])
    assert exc.value.code == 0
