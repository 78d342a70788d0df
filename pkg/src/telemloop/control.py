"""Hierarchical telemetry controllers and their sync protocol.

Local controllers turn each closed epoch snapshot into a local estimate
set. At every sync round they upload their latest snapshot; the central
controller merges the raw snapshots (never the numeric estimates),
computes the global set from the merged sketch and sends it back down.

Sync message framing::

    "NSYN" | u64 round | u8 kind | u64 payload length | payload

Uploads carry an encoded :class:`EpochSnapshot`; downloads carry an
encoded :class:`EstimateSet`.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum

from .dataplane import EpochSnapshot
from .errors import NotYetAvailable, StaleSnapshot
from .estimates import (
    EstimateSet,
    MetricPlan,
    Scope,
    compute_estimates,
    decode_estimates,
    encode_estimates,
)
from .sketch.histogram import merge_histograms
from .sketch.universal import MergedUnivSketch, merge_all

SYNC_MAGIC = b"NSYN"
_FRAME = struct.Struct("<4sQBQ")
CENTRAL_ID = -1


class MessageKind(IntEnum):
    SNAPSHOT_UPLOAD = 1
    GLOBAL_DOWNLOAD = 2


@dataclass(frozen=True)
class SyncMessage:
    kind: MessageKind
    round: int
    sender: int
    payload: bytes

    def encode(self) -> bytes:
        return _FRAME.pack(SYNC_MAGIC, self.round, int(self.kind), len(self.payload)) + self.payload

    @classmethod
    def decode(cls, buf: bytes) -> "SyncMessage":
        if len(buf) < _FRAME.size:
            raise ValueError("truncated sync frame")
        magic, rnd, kind, length = _FRAME.unpack_from(buf)
        if magic != SYNC_MAGIC:
            raise ValueError("bad sync magic")
        payload = bytes(buf[_FRAME.size :])
        if len(payload) != length:
            raise ValueError("sync payload length mismatch")
        kind = MessageKind(kind)
        if kind is MessageKind.SNAPSHOT_UPLOAD:
            sender = EpochSnapshot.decode(payload).switch_id
        else:
            sender = CENTRAL_ID
        return cls(kind, rnd, sender, payload)

    @classmethod
    def upload(cls, rnd: int, snap: EpochSnapshot) -> "SyncMessage":
        return cls(MessageKind.SNAPSHOT_UPLOAD, rnd, snap.switch_id, snap.encode())

    @classmethod
    def download(cls, rnd: int, estimates: EstimateSet) -> "SyncMessage":
        return cls(MessageKind.GLOBAL_DOWNLOAD, rnd, CENTRAL_ID, encode_estimates(estimates))


class LocalController:
    def __init__(self, switch_id: int, plan: MetricPlan, epoch_ticks: int, sync_period: int):
        if sync_period < 1:
            raise ValueError("sync period must be at least one local epoch")
        self.switch_id = switch_id
        self.plan = plan
        self.epoch_ticks = epoch_ticks
        self.sync_period = sync_period
        self.latest_local: EstimateSet | None = None
        self.latest_global: EstimateSet | None = None
        self.global_round = -1
        self.last_snapshot: EpochSnapshot | None = None

    def local_compute(self, snapshot: EpochSnapshot, now: int) -> EstimateSet:
        last = self.last_snapshot.epoch.index if self.last_snapshot else -1
        if snapshot.epoch.index <= last:
            raise StaleSnapshot(f"epoch {snapshot.epoch.index} already processed (last {last})")
        previous = self.last_snapshot.sketch if self.last_snapshot else None
        entries = compute_estimates(snapshot.sketch, snapshot.histograms, previous, self.plan)
        self.last_snapshot = snapshot
        self.latest_local = EstimateSet(entries, Scope.LOCAL, snapshot.epoch.index, now, switch=self.switch_id)
        return self.latest_local

    def upload(self, rnd: int) -> SyncMessage:
        if self.last_snapshot is None:
            raise NotYetAvailable("no snapshot to upload yet")
        return SyncMessage.upload(rnd, self.last_snapshot)

    def receive(self, message: SyncMessage | bytes) -> bool:
        """Install a global download; older rounds never overwrite newer ones."""
        if isinstance(message, (bytes, bytearray)):
            message = SyncMessage.decode(message)
        if message.kind is not MessageKind.GLOBAL_DOWNLOAD:
            raise ValueError("local controllers only accept global downloads")
        if message.round <= self.global_round:
            return False
        self.latest_global = decode_estimates(message.payload)
        self.global_round = message.round
        return True

    def freshness_query(self, want: Scope, now: int) -> tuple[EstimateSet, int]:
        held = self.latest_local if want is Scope.LOCAL else self.latest_global
        if held is None:
            raise NotYetAvailable(f"no {want.value} estimates yet")
        return held, now - held.produced_at


class CentralController:
    def __init__(self, plan: MetricPlan, members=()):
        self.plan = plan
        self.members: list[int] = sorted(members)
        self.snapshots: dict[int, EpochSnapshot] = {}
        self.merged: MergedUnivSketch | None = None
        self.previous_merged: MergedUnivSketch | None = None
        self.global_set: EstimateSet | None = None
        self.round = -1

    def register(self, switch_id: int) -> None:
        if switch_id not in self.members:
            self.members.append(switch_id)
            self.members.sort()

    def sync_round(self, rnd: int, uploads, now: int) -> tuple[EstimateSet, list[tuple[int, SyncMessage]]]:
        """Merge the round's uploads; returns the global set and one download per member."""
        if rnd <= self.round:
            raise StaleSnapshot(f"round {rnd} is not newer than {self.round}")
        fresh: dict[int, EpochSnapshot] = {}
        for msg in uploads:
            if isinstance(msg, (bytes, bytearray)):
                msg = SyncMessage.decode(msg)
            if msg.kind is not MessageKind.SNAPSHOT_UPLOAD:
                raise ValueError("central only accepts snapshot uploads")
            if msg.round != rnd:
                raise ValueError(f"upload for round {msg.round} in round {rnd}")
            snap = EpochSnapshot.decode(msg.payload)
            fresh[snap.switch_id] = snap
        stale = tuple(m for m in self.members if m not in fresh)
        self.snapshots.update(fresh)
        used = [self.snapshots[m] for m in self.members if m in self.snapshots]
        if not used:
            raise NotYetAvailable("no member has ever reported")
        merged = merge_all([s.sketch for s in used])
        hists = {a: merge_histograms([s.histograms[a] for s in used]) for a in self.plan.dims if a in used[0].histograms}
        entries = compute_estimates(merged, hists, self.merged, self.plan)
        self.previous_merged, self.merged = self.merged, merged
        self.round = rnd
        self.global_set = EstimateSet(
            entries,
            Scope.GLOBAL,
            max(s.epoch.index for s in used),
            now,
            round=rnd,
            degraded=bool(stale),
            stale_members=stale,
        )
        msg = SyncMessage.download(rnd, self.global_set)
        downloads = [(m, msg) for m in self.members]
        return self.global_set, downloads
