"""INI run configuration.

Sections::

    [run]        seed, out
    [topology]   switches, nodes_per_switch
    [sketch]     rows, width, levels, capacity, p, refresh_every, histogram_buckets
    [timing]     epoch_records (per switch), sync_period, upload_delay,
                 download_delay, sync_timeout (delays in ticks = records)
    [metrics]    hh_threshold, quantiles
    [services]   reshard, reshard_dim, window, theta, change_factor, trailing,
                 cache, cache_dim, cache_capacity, cache_hh_threshold
    [workload]   records, dims            (required block)
    [dim:NAME]   DimSchedule fields for dimension NAME
    [attribute:NAME]  lo, hi, scale, metrics, timing, buffer

Every field has a default; only the ``[workload]`` block must be present.
Without any ``[attribute:*]`` block every workload dimension is
registered with all metrics and loose timing.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass

from .errors import ConfigError
from .estimates import DEFAULT_QUANTILES, Metric
from .hashing import named_seed
from .northbound import AttributeSpec, Timing
from .sketch.universal import SketchGeometry
from .workload import DimSchedule, DriftSchedule


@dataclass(frozen=True)
class AttributeConfig:
    name: str
    metrics: tuple[str, ...] = tuple(m.value for m in Metric)
    timing: str = "loose"
    lo: float | None = None
    hi: float | None = None
    scale: str | None = None
    buffer: int = 16


@dataclass
class RunConfig:
    seed: int = 1
    out: str = "out"
    switches: int = 4
    nodes_per_switch: int = 2
    rows: int = 5
    width: int = 2048
    levels: int = 16
    capacity: int = 64
    p: float = 1.0
    refresh_every: int = 1024
    histogram_buckets: int = 256
    epoch_records: int = 1000
    sync_period: int = 10
    upload_delay: int = 0
    download_delay: int = 0
    sync_timeout: int = 0
    hh_threshold: float = 0.01
    quantiles: tuple[float, ...] = DEFAULT_QUANTILES
    reshard: bool = False
    reshard_dim: str = ""
    window: int = 5
    theta: float = 1.3
    change_factor: float = 5.0
    trailing: int = 8
    cache: bool = False
    cache_dim: str = ""
    cache_capacity: int = 64
    cache_hh_threshold: float = 0.001
    records: int = 0
    dims: tuple[DimSchedule, ...] = ()
    attributes: tuple[AttributeConfig, ...] = ()

    @property
    def n_nodes(self) -> int:
        return self.switches * self.nodes_per_switch

    @property
    def epoch_ticks(self) -> int:
        """Records per epoch over the whole fabric."""
        return self.epoch_records * self.switches

    def workload_seed(self) -> int:
        return named_seed(self.seed, "workload")

    def sketch_seed(self) -> int:
        return named_seed(self.seed, "sketch")

    def sampling_seed(self) -> int:
        return named_seed(self.seed, "sampling")

    def geometry(self) -> SketchGeometry:
        return SketchGeometry(
            rows=self.rows,
            width=self.width,
            levels=self.levels,
            dims=max(len(self.telemetry_dims()), 1),
            capacity=self.capacity,
            seed=self.sketch_seed(),
        )

    def schedule(self) -> DriftSchedule:
        return DriftSchedule(self.dims, seed=self.workload_seed(), epoch_records=self.epoch_ticks)

    def telemetry_dims(self) -> list[str]:
        """Names of every dimension that will be sketched, in registration order."""
        names = [a.name for a in self.attribute_list()]
        for on, name in ((self.reshard, self.reshard_dim), (self.cache, self.cache_dim)):
            if on and name not in names:
                names.append(name)
        return names

    def attribute_list(self) -> tuple[AttributeConfig, ...]:
        if self.attributes:
            return self.attributes
        return tuple(AttributeConfig(d.name) for d in self.dims)

    def attribute_spec(self, attr: AttributeConfig) -> AttributeSpec:
        dom = self.dim(attr.name).domain()
        return AttributeSpec(
            attr.name,
            dom.lo if attr.lo is None else attr.lo,
            dom.hi if attr.hi is None else attr.hi,
            attr.scale or dom.scale,
        )

    def dim(self, name: str) -> DimSchedule:
        for d in self.dims:
            if d.name == name:
                return d
        raise ConfigError(f"no workload dimension named {name!r}", "workload", "dims")

    def validate(self) -> "RunConfig":
        def need(ok: bool, block: str, fld: str, msg: str):
            if not ok:
                raise ConfigError(msg, block, fld)

        need(self.switches >= 1, "topology", "switches", "must be >= 1")
        need(self.nodes_per_switch >= 1, "topology", "nodes_per_switch", "must be >= 1")
        need(0 < self.p <= 1, "sketch", "p", "must be in (0, 1]")
        need(self.epoch_records >= 1, "timing", "epoch_records", "must be >= 1")
        need(self.sync_period >= 1, "timing", "sync_period", "must be >= 1")
        for f in ("upload_delay", "download_delay", "sync_timeout"):
            need(getattr(self, f) >= 0, "timing", f, "must be >= 0")
        need(0 < self.hh_threshold <= 1, "metrics", "hh_threshold", "must be in (0, 1]")
        need(all(0 <= q <= 1 for q in self.quantiles), "metrics", "quantiles", "must lie in [0, 1]")
        need(self.records >= 0, "workload", "records", "must be >= 0")
        need(bool(self.dims), "workload", "dims", "needs at least one dimension")
        names = {d.name for d in self.dims}
        for a in self.attribute_list():
            need(a.name in names, f"attribute:{a.name}", "name", "not a workload dimension")
            for m in a.metrics:
                try:
                    Metric.parse(m)
                except ValueError as exc:
                    raise ConfigError(str(exc), f"attribute:{a.name}", "metrics") from None
            try:
                Timing.parse(a.timing)
            except ValueError:
                raise ConfigError(f"unknown timing {a.timing!r}", f"attribute:{a.name}", "timing") from None
            need(a.buffer >= 1, f"attribute:{a.name}", "buffer", "must be >= 1")
        if self.reshard:
            need(self.reshard_dim in names, "services", "reshard_dim", "must name a workload dimension")
        if self.cache:
            need(self.cache_dim in names, "services", "cache_dim", "must name a workload dimension")
            need(self.cache_capacity >= 1, "services", "cache_capacity", "must be >= 1")
        try:
            self.geometry()
        except ValueError as exc:
            raise ConfigError(str(exc), "sketch") from None
        return self

    def with_seed(self, seed: int) -> "RunConfig":
        return dataclasses.replace(self, seed=seed)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["dims"] = [dataclasses.asdict(d) for d in self.dims]
        out["attributes"] = [dataclasses.asdict(a) for a in self.attribute_list()]
        out["quantiles"] = list(self.quantiles)
        out["sub_seeds"] = {
            "workload": self.workload_seed(),
            "sketch": self.sketch_seed(),
            "sampling": self.sampling_seed(),
        }
        return out


_SECTIONS = {
    "run": ("seed", "out"),
    "topology": ("switches", "nodes_per_switch"),
    "sketch": ("rows", "width", "levels", "capacity", "p", "refresh_every", "histogram_buckets"),
    "timing": ("epoch_records", "sync_period", "upload_delay", "download_delay", "sync_timeout"),
    "metrics": ("hh_threshold", "quantiles"),
    "services": (
        "reshard",
        "reshard_dim",
        "window",
        "theta",
        "change_factor",
        "trailing",
        "cache",
        "cache_dim",
        "cache_capacity",
        "cache_hh_threshold",
    ),
    "workload": ("records",),
}

_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}
_DIM_TYPES = {f.name: f.type for f in dataclasses.fields(DimSchedule)}


def _convert(raw: str, typ: str, block: str, fld: str):
    raw = raw.strip()
    try:
        if typ.startswith("int"):
            return int(raw, 0)
        if typ.startswith("float"):
            return float(raw)
        if typ == "bool":
            low = raw.lower()
            if low in ("1", "yes", "true", "on"):
                return True
            if low in ("0", "no", "false", "off"):
                return False
            raise ValueError(raw)
        if typ.startswith("tuple[float"):
            return tuple(float(x) for x in raw.replace(",", " ").split())
        if typ.startswith("tuple[tuple"):
            # components = w mu sigma; w mu sigma
            return tuple(tuple(float(x) for x in part.split()) for part in raw.split(";") if part.strip())
        if typ.startswith("str"):
            return raw
    except ValueError:
        raise ConfigError(f"cannot parse {raw!r} as {typ}", block, fld) from None
    raise ConfigError(f"unsupported field type {typ}", block, fld)


def _nullable(raw: str, typ: str, block: str, fld: str):
    if raw.strip().lower() in ("", "none"):
        return None
    return _convert(raw, typ.replace(" | None", ""), block, fld)


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc).replace("\n", " ")) from None
    if not cp.has_section("workload"):
        raise ConfigError("missing required [workload] block", "workload")
    kw: dict = {}
    for block, fields in _SECTIONS.items():
        if not cp.has_section(block):
            continue
        for key, raw in cp.items(block):
            if key == "dims" and block == "workload":
                continue
            if key not in fields:
                raise ConfigError(f"unknown field {key!r}", block, key)
            kw[key] = _convert(raw, _FIELD_TYPES[key], block, key)
    names = [n.strip() for n in cp.get("workload", "dims", fallback="").split(",") if n.strip()]
    dims = []
    for name in names:
        block = f"dim:{name}"
        dkw: dict = {"name": name}
        if cp.has_section(block):
            for key, raw in cp.items(block):
                if key not in _DIM_TYPES or key == "name":
                    raise ConfigError(f"unknown field {key!r}", block, key)
                typ = _DIM_TYPES[key]
                dkw[key] = _nullable(raw, typ, block, key) if "None" in typ else _convert(raw, typ, block, key)
        try:
            dims.append(DimSchedule(**dkw))
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc), block) from None
    for sec in cp.sections():
        if sec.startswith("dim:") and sec[4:] not in names:
            raise ConfigError("dimension not listed in [workload] dims", sec)
    kw["dims"] = tuple(dims)
    attrs = []
    for sec in cp.sections():
        if not sec.startswith("attribute:"):
            continue
        akw: dict = {"name": sec.split(":", 1)[1]}
        for key, raw in cp.items(sec):
            if key == "metrics":
                akw[key] = tuple(m.strip() for m in raw.split(",") if m.strip())
            elif key == "timing":
                akw[key] = raw.strip()
            elif key in ("lo", "hi"):
                akw[key] = _convert(raw, "float", sec, key)
            elif key == "scale":
                akw[key] = raw.strip()
            elif key == "buffer":
                akw[key] = _convert(raw, "int", sec, key)
            else:
                raise ConfigError(f"unknown field {key!r}", sec, key)
        attrs.append(AttributeConfig(**akw))
    kw["attributes"] = tuple(attrs)
    for sec in cp.sections():
        if sec not in _SECTIONS and not sec.startswith(("dim:", "attribute:")):
            raise ConfigError("unknown block", sec)
    return RunConfig(**kw).validate()


def load_config(path: str) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text, source=str(path))
