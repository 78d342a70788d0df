import dataclasses
from pathlib import Path

import numpy as np
import pytest

from telemloop.config import load_config
from telemloop.sketch.universal import SketchGeometry

ROOT = Path(__file__).resolve().parent.parent
REFERENCE_CONFIG = ROOT / "configs" / "reference.cfg"

ACCEPTANCE_LINES: list[str] = []


def report_criterion(number: int, name: str, ok: bool, detail: str) -> None:
    line = f"ACCEPTANCE {number:>2} {name}: {'PASS' if ok else 'FAIL'} | {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)


@pytest.fixture
def small_geometry():
    return SketchGeometry(rows=5, width=1024, levels=12, dims=1, capacity=64, seed=11)


@pytest.fixture(scope="session")
def reference_config():
    return load_config(str(REFERENCE_CONFIG))


@pytest.fixture(scope="session")
def small_config(reference_config):
    """The reference scenario shrunk to 40 epochs with drifts moved forward."""
    dims = []
    for d in reference_config.dims:
        kw = {}
        if d.shift_epoch is not None:
            kw["shift_epoch"] = 25
        if d.conc_start is not None:
            kw.update(conc_start=5, conc_end=30)
        dims.append(dataclasses.replace(d, **kw))
    return dataclasses.replace(reference_config, records=160_000, width=1024, dims=tuple(dims))


def zipf_keys(n: int, universe: int, s: float, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    w = np.arange(1, universe + 1, dtype=np.float64) ** -s
    cdf = np.cumsum(w) / w.sum()
    return np.searchsorted(cdf, rng.random(n), side="right").astype(np.uint64)


def exact_counts(keys) -> dict[int, int]:
    uniq, counts = np.unique(np.asarray(keys, dtype=np.uint64), return_counts=True)
    return dict(zip(uniq.tolist(), counts.tolist()))


def exact_entropy(keys) -> float:
    _, counts = np.unique(np.asarray(keys), return_counts=True)
    p = counts / counts.sum()
    return float(-(p * np.log2(p)).sum())
