"""Binary snapshot layout.

    "NSKT" | u16 version | geometry block | per-level counters (i64 LE)
    | per-dim stream lengths (i64) | tracker dumps | histogram blocks | meta

All integers little-endian. Decoding then re-encoding reproduces the input
bytes exactly. The sampling generator is not part of a snapshot; decoded
sketches start a fresh sampler.
"""

from __future__ import annotations

import struct
from typing import Mapping

import numpy as np

from .histogram import DimHistogram, ValueDomain
from .universal import MergedUnivSketch, SketchGeometry

MAGIC = b"NSKT"
VERSION = 1
_GEOM = struct.Struct("<IIIIIQdIQQ")
_HIST = struct.Struct("<IddBQ")
_SCALES = {"linear": 0, "log": 1}


class SnapshotFormatError(ValueError):
    pass


def encode_snapshot(
    sketch: MergedUnivSketch,
    histograms: list[DimHistogram] | None = None,
    meta: Mapping[str, int] | None = None,
) -> bytes:
    sketch.flush()
    g = sketch.geometry
    overflow = sum(1 << j for j, t in enumerate(sketch.tables) if t.overflow)
    out = [MAGIC, struct.pack("<H", VERSION)]
    out.append(
        _GEOM.pack(g.rows, g.width, g.levels, g.dims, g.capacity, g.seed, sketch.p, sketch.refresh_every, sketch.records, overflow)
    )
    out.append(struct.pack("<Q", sketch.sampling_seed))
    out.append(sketch.counters.astype("<i8", copy=False).tobytes())
    out.append(np.array(sketch.m, dtype="<i8").tobytes())
    for row in sketch.trackers:
        for tr in row:
            out.append(struct.pack("<I", len(tr)))
            out.append(tr.keys.astype("<u8").tobytes())
            out.append(tr.est.astype("<i8").tobytes())
            out.append(tr.nxt.astype(np.uint8).tobytes())
    hists = histograms or []
    out.append(struct.pack("<I", len(hists)))
    for h in hists:
        out.append(_HIST.pack(h.buckets, h.domain.lo, h.domain.hi, _SCALES[h.domain.scale], h.clamped))
        out.append(h.counts.astype("<i8").tobytes())
    meta = dict(meta or {})
    out.append(struct.pack("<I", len(meta)))
    for name in sorted(meta):
        raw = name.encode("utf-8")
        out.append(struct.pack("<H", len(raw)) + raw + struct.pack("<q", int(meta[name])))
    return b"".join(out)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = memoryview(buf)
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise SnapshotFormatError("truncated snapshot")
        chunk = self.buf[self.pos : self.pos + n]
        self.pos += n
        return bytes(chunk)

    def unpack(self, fmt: str | struct.Struct):
        s = fmt if isinstance(fmt, struct.Struct) else struct.Struct(fmt)
        return s.unpack(self.take(s.size))

    def array(self, dtype: str, count: int) -> np.ndarray:
        size = np.dtype(dtype).itemsize * count
        return np.frombuffer(self.take(size), dtype=dtype).copy()


def decode_snapshot(buf: bytes) -> tuple[MergedUnivSketch, list[DimHistogram], dict[str, int]]:
    r = _Reader(buf)
    if r.take(4) != MAGIC:
        raise SnapshotFormatError("bad magic")
    (version,) = r.unpack("<H")
    if version != VERSION:
        raise SnapshotFormatError(f"unsupported snapshot version {version}")
    rows, width, levels, dims, cap, seed, p, refresh, records, overflow = r.unpack(_GEOM)
    (sampling_seed,) = r.unpack("<Q")
    g = SketchGeometry(rows=rows, width=width, levels=levels, dims=dims, capacity=cap, seed=seed)
    sk = MergedUnivSketch(g, p=p, sampling_seed=sampling_seed, refresh_every=refresh)
    sk.counters[...] = r.array("<i8", levels * rows * width).reshape(levels, rows, width)
    for j, t in enumerate(sk.tables):
        t.overflow = bool(overflow >> j & 1)
        t._bound = int(np.abs(t.counters).max()) if t.counters.any() else 0
    sk.m = [int(v) for v in r.array("<i8", dims)]
    sk.records = records
    for row in sk.trackers:
        for tr in row:
            (n,) = r.unpack("<I")
            tr.keys = r.array("<u8", n).astype(np.uint64)
            tr.est = r.array("<i8", n).astype(np.int64)
            tr.nxt = r.array("u1", n).astype(bool)
    (nh,) = r.unpack("<I")
    scales = {v: k for k, v in _SCALES.items()}
    hists = []
    for _ in range(nh):
        buckets, lo, hi, scale, clamped = r.unpack(_HIST)
        h = DimHistogram(ValueDomain(lo, hi, scales[scale]), buckets)
        h.counts = r.array("<i8", buckets).astype(np.int64)
        h.clamped = clamped
        hists.append(h)
    (nm,) = r.unpack("<I")
    meta = {}
    for _ in range(nm):
        (ln,) = r.unpack("<H")
        name = r.take(ln).decode("utf-8")
        (val,) = r.unpack("<q")
        meta[name] = val
    if r.pos != len(r.buf):
        raise SnapshotFormatError("trailing bytes after snapshot")
    return sk, hists, meta
