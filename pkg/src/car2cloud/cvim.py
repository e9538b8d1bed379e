"""Common vehicle information model: channels, one-second packages, queues.

Three layers: proprietary signals (brand-tagged, never serialized),
measurement channels that harmonize raw signal values into SI units via an
affine map, and data packages that bundle one interval's channel records
together with ownership and privacy metadata.  Each vehicle owns a FIFO
transmit queue that drains against the uplink capacity of the current tick;
packages are sent atomically or not at all.

Wire format (little-endian, length-prefixed):

    u32  body length (header + records)
    64-byte header:
        16 B package id digest (keyed, so raw vehicle ids never leak)
         8 B pseudonymous vehicle id (keyed 64-bit hash)
         4 B interval_start (u32 seconds)
         1 B duration (u8 seconds)
         2 B record count (u16)
         1 B privacy level (u8)
        16 B owner, zero-padded UTF-8
         8 B checksum (u64 over records + owner + privacy)
         8 B reserved
    16 B per record: channel_id u16, t offset ms u16, value f64, 4 B reserved
"""

from __future__ import annotations

import hashlib
import math
import struct
from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable, Protocol

from .errors import ConfigError, ValidationError
from .mobility import TraceSample

SIGNAL_SOURCES = ("CAN", "OBD", "other")
PRIVACY_LEVELS = ("public", "restricted", "private")

_HEADER_STRUCT = struct.Struct("<16sQIBHB16sQ8x")
_RECORD_STRUCT = struct.Struct("<HHd4x")
_LENGTH_STRUCT = struct.Struct("<I")

assert _HEADER_STRUCT.size == 64
assert _RECORD_STRUCT.size == 16


@dataclass(frozen=True)
class SignalDescriptor:
    """Bottom layer: a proprietary in-vehicle signal."""

    signal_id: str
    source: str
    raw_unit: str
    brand_tag: str

    def __post_init__(self) -> None:
        if self.source not in SIGNAL_SOURCES:
            raise ConfigError(f"signal source must be one of {SIGNAL_SOURCES}")
        if not self.brand_tag:
            raise ConfigError("signal brand_tag must be non-empty")


@dataclass(frozen=True)
class MeasurementChannel:
    """Middle layer: brand-independent channel with an affine raw->SI map."""

    channel_id: int
    name: str
    si_unit: str
    scale: float = 1.0
    offset: float = 0.0
    sample_rate_hz: float = 1.0

    def __post_init__(self) -> None:
        if self.scale == 0:
            raise ConfigError(f"channel {self.name!r}: scale must be non-zero")
        if not 0 <= self.channel_id <= 0xFFFF:
            raise ConfigError(f"channel {self.name!r}: channel_id must fit u16")


@dataclass(frozen=True)
class ChannelRecord:
    channel_id: int
    t: float
    value: float


@dataclass(frozen=True)
class PackageMeta:
    owner: str = "unknown"
    privacy_level: str = "restricted"
    checksum: int = 0

    def __post_init__(self) -> None:
        if self.privacy_level not in PRIVACY_LEVELS:
            raise ConfigError(f"privacy_level must be one of {PRIVACY_LEVELS}")
        if len(self.owner.encode("utf-8")) > 16:
            raise ValidationError(f"owner {self.owner!r} exceeds 16 bytes")


@dataclass(frozen=True)
class CvimDataPackage:
    package_id: str
    pseudonymous_vehicle_id: int
    interval_start: int
    duration: int
    records: tuple[ChannelRecord, ...]
    payload_bytes: int
    meta: PackageMeta


@dataclass(frozen=True)
class PackagingConfig:
    """Package sizing, channel set and privacy knobs."""

    header_bytes: int = 64
    record_bytes: int = 16
    n_extra_channels: int = 0
    aggregate_ticks: int = 1
    pseudonym_key: str = "car2cloud"
    owner: str = "unknown"
    privacy_level: str = "restricted"

    def __post_init__(self) -> None:
        if self.header_bytes <= 0 or self.record_bytes <= 0:
            raise ConfigError("cvim sizes must be positive")
        if self.n_extra_channels < 0:
            raise ConfigError("cvim.n_extra_channels must be non-negative")
        # The record t-offset field is u16 milliseconds, so one package can
        # span at most 65 whole seconds.
        if not 1 <= self.aggregate_ticks <= 65:
            raise ConfigError("cvim.aggregate_ticks must be in [1, 65]")


DEFAULT_CONFIG = PackagingConfig()

# Channels every tick package carries; extras get ids above 1000.
BASE_CHANNELS = (
    MeasurementChannel(1, "position-x", "m"),
    MeasurementChannel(2, "position-y", "m"),
    MeasurementChannel(3, "speed", "m/s"),
)


def harmonize(raw_value: float, channel: MeasurementChannel) -> float:
    """Map a proprietary raw value into the channel's SI unit."""
    if not math.isfinite(raw_value):
        raise ValidationError(
            f"channel {channel.name!r}: non-finite raw value {raw_value!r}"
        )
    return raw_value * channel.scale + channel.offset


@lru_cache(maxsize=None)
def pseudonymize(vehicle_id: str, key: str) -> int:
    """Keyed 64-bit hash that replaces the raw vehicle id on the wire."""
    digest = hashlib.blake2b(
        vehicle_id.encode("utf-8"), key=key.encode("utf-8"), digest_size=8
    ).digest()
    return int.from_bytes(digest, "little")


def _owner_field(owner: str) -> bytes:
    return owner.encode("utf-8").ljust(16, b"\0")


def _records_blob(records: Iterable[ChannelRecord], interval_start: int) -> bytes:
    parts = []
    for rec in records:
        offset_ms = round((rec.t - interval_start) * 1000.0)
        parts.append(_RECORD_STRUCT.pack(rec.channel_id, offset_ms, rec.value))
    return b"".join(parts)


def checksum(
    records: Iterable[ChannelRecord], meta_owner: str, privacy_level: str, interval_start: int
) -> int:
    """64-bit integrity checksum over the records and metadata."""
    h = hashlib.blake2b(digest_size=8)
    h.update(_records_blob(records, interval_start))
    h.update(_owner_field(meta_owner))
    h.update(bytes([PRIVACY_LEVELS.index(privacy_level)]))
    return int.from_bytes(h.digest(), "little")


def package(
    vehicle_id: str,
    interval_start: int,
    records: Iterable[ChannelRecord],
    config: PackagingConfig = DEFAULT_CONFIG,
    duration: int = 1,
) -> CvimDataPackage:
    """Bundle one interval's records into a data package.

    Records must fall inside [interval_start, interval_start + duration).
    """
    recs = tuple(records)
    for rec in recs:
        if not interval_start <= rec.t < interval_start + duration:
            raise ValidationError(
                f"record (channel {rec.channel_id}, t={rec.t}) outside interval "
                f"[{interval_start}, {interval_start + duration})"
            )
        if not math.isfinite(rec.value):
            raise ValidationError(
                f"record (channel {rec.channel_id}, t={rec.t}) has non-finite value"
            )
    meta = PackageMeta(
        owner=config.owner,
        privacy_level=config.privacy_level,
        checksum=checksum(recs, config.owner, config.privacy_level, interval_start),
    )
    return CvimDataPackage(
        package_id=f"{vehicle_id}@{interval_start}",
        pseudonymous_vehicle_id=pseudonymize(vehicle_id, config.pseudonym_key),
        interval_start=interval_start,
        duration=duration,
        records=recs,
        payload_bytes=config.header_bytes + config.record_bytes * len(recs),
        meta=meta,
    )


def tick_records(sample: TraceSample, config: PackagingConfig = DEFAULT_CONFIG) -> list[ChannelRecord]:
    """Channel records one vehicle produces in one tick."""
    records = [
        ChannelRecord(BASE_CHANNELS[0].channel_id, float(sample.t), sample.x),
        ChannelRecord(BASE_CHANNELS[1].channel_id, float(sample.t), sample.y),
        ChannelRecord(BASE_CHANNELS[2].channel_id, float(sample.t), sample.speed),
    ]
    for i in range(config.n_extra_channels):
        records.append(ChannelRecord(1000 + i, float(sample.t), 0.0))
    return records


def generate_tick_package(
    sample: TraceSample, config: PackagingConfig = DEFAULT_CONFIG
) -> CvimDataPackage:
    """One package per vehicle per tick; data is assumed always available."""
    return package(sample.vehicle_id, sample.t, tick_records(sample, config), config)


def _package_id_digest(package_id: str, key: str) -> bytes:
    return hashlib.blake2b(
        package_id.encode("utf-8"), key=key.encode("utf-8"), digest_size=16
    ).digest()


def serialize_package(
    pkg: CvimDataPackage, config: PackagingConfig = DEFAULT_CONFIG
) -> bytes:
    """Serialize to the length-prefixed binary wire format.

    The readable package id is replaced by a keyed digest so serialized
    bytes never contain the raw vehicle id.
    """
    blob = _records_blob(pkg.records, pkg.interval_start)
    header = _HEADER_STRUCT.pack(
        _package_id_digest(pkg.package_id, config.pseudonym_key),
        pkg.pseudonymous_vehicle_id,
        pkg.interval_start,
        pkg.duration,
        len(pkg.records),
        PRIVACY_LEVELS.index(pkg.meta.privacy_level),
        _owner_field(pkg.meta.owner),
        pkg.meta.checksum,
    )
    return _LENGTH_STRUCT.pack(len(header) + len(blob)) + header + blob


def parse_package(
    data: bytes, config: PackagingConfig = DEFAULT_CONFIG
) -> CvimDataPackage:
    """Parse one serialized package and verify its checksum."""
    if len(data) < _LENGTH_STRUCT.size:
        raise ValidationError("truncated package: missing length prefix")
    (body_len,) = _LENGTH_STRUCT.unpack_from(data, 0)
    body = data[_LENGTH_STRUCT.size : _LENGTH_STRUCT.size + body_len]
    if len(body) != body_len:
        raise ValidationError("truncated package body")
    if body_len < _HEADER_STRUCT.size:
        raise ValidationError("package body shorter than header")
    (
        pid_digest,
        pseudonym,
        interval_start,
        duration,
        count,
        privacy_idx,
        owner_raw,
        stored_checksum,
    ) = _HEADER_STRUCT.unpack_from(body, 0)
    if privacy_idx >= len(PRIVACY_LEVELS):
        raise ValidationError(f"unknown privacy level code {privacy_idx}")
    expected = _HEADER_STRUCT.size + count * _RECORD_STRUCT.size
    if body_len != expected:
        raise ValidationError(
            f"package body length {body_len} does not match {count} records"
        )
    records = []
    for i in range(count):
        channel_id, offset_ms, value = _RECORD_STRUCT.unpack_from(
            body, _HEADER_STRUCT.size + i * _RECORD_STRUCT.size
        )
        records.append(ChannelRecord(channel_id, interval_start + offset_ms / 1000.0, value))
    owner = owner_raw.rstrip(b"\0").decode("utf-8")
    privacy = PRIVACY_LEVELS[privacy_idx]
    actual = checksum(records, owner, privacy, interval_start)
    if actual != stored_checksum:
        raise ValidationError(
            f"package checksum mismatch (stored {stored_checksum:#x}, "
            f"computed {actual:#x})"
        )
    return CvimDataPackage(
        package_id=pid_digest.hex(),
        pseudonymous_vehicle_id=pseudonym,
        interval_start=interval_start,
        duration=duration,
        records=tuple(records),
        payload_bytes=config.header_bytes + config.record_bytes * count,
        meta=PackageMeta(owner=owner, privacy_level=privacy, checksum=stored_checksum),
    )


def channel_allowlist_priority(
    channel_ids: Iterable[int],
) -> Callable[[CvimDataPackage], bool]:
    """Priority predicate: packages carrying any allowlisted channel go first.

    This is the knob for sending only selected, prioritized data when the
    uplink is scarce; time-uncritical packages stay queued behind them.
    """
    allowed = frozenset(channel_ids)

    def predicate(pkg: CvimDataPackage) -> bool:
        return any(rec.channel_id in allowed for rec in pkg.records)

    return predicate


class TransmitQueue:
    """Per-vehicle FIFO of pending packages, with optional priority class.

    Packages the predicate marks high-priority are served before the rest;
    order within each class stays first-in-first-out.
    """

    def __init__(
        self,
        vehicle_id: str,
        priority: Callable[[CvimDataPackage], bool] | None = None,
    ):
        self.vehicle_id = vehicle_id
        self._priority = priority
        self._high: deque[CvimDataPackage] = deque()
        self._normal: deque[CvimDataPackage] = deque()

    def push(self, pkg: CvimDataPackage) -> None:
        if self._priority is not None and self._priority(pkg):
            self._high.append(pkg)
        else:
            self._normal.append(pkg)

    def __len__(self) -> int:
        return len(self._high) + len(self._normal)

    @property
    def queued_bytes(self) -> int:
        return sum(p.payload_bytes for p in self._high) + sum(
            p.payload_bytes for p in self._normal
        )

    def _head(self) -> CvimDataPackage | None:
        if self._high:
            return self._high[0]
        if self._normal:
            return self._normal[0]
        return None

    def _pop(self) -> CvimDataPackage:
        return self._high.popleft() if self._high else self._normal.popleft()


def try_transmit(queue: TransmitQueue, capacity_bits: int) -> tuple[list[str], int]:
    """Drain the queue against this tick's capacity, whole packages only.

    Service stops at the first package that does not fit; nothing is
    fragmented or reordered past it.  Returns the sent package ids and the
    capacity left over.
    """
    if capacity_bits < 0:
        raise ConfigError("capacity_bits must be non-negative")
    remaining = capacity_bits
    sent: list[str] = []
    while True:
        head = queue._head()
        if head is None or head.payload_bytes * 8 > remaining:
            return sent, remaining
        queue._pop()
        remaining -= head.payload_bytes * 8
        sent.append(head.package_id)


class TickRow(Protocol):
    """Shape of a per-tick result row as far as package counting needs."""

    t: int
    vehicle_id: str
    serving_station: str
    packages_generated: int


def count_packages_per_cell(results: Iterable[TickRow]) -> dict[str, float]:
    """Mean packages generated per traversal, per cell.

    A traversal is a maximal run of consecutive ticks a vehicle stays
    attached to one station; one package is generated per attached tick.
    Cells that never see a vehicle are absent from the result.
    """
    by_vehicle: dict[str, list[TickRow]] = {}
    for row in results:
        by_vehicle.setdefault(row.vehicle_id, []).append(row)
    if not by_vehicle:
        raise ValidationError("no tick results: nothing ever traversed a cell")
    traversal_ticks: dict[str, list[int]] = {}
    for vid in sorted(by_vehicle):
        rows = sorted(by_vehicle[vid], key=lambda r: r.t)
        run_station = None
        run_len = 0
        prev_t = None
        for row in rows:
            contiguous = prev_t is not None and row.t == prev_t + 1
            if row.serving_station == run_station and contiguous:
                run_len += 1
            else:
                if run_station is not None:
                    traversal_ticks.setdefault(run_station, []).append(run_len)
                run_station = row.serving_station
                run_len = 1
            prev_t = row.t
        if run_station is not None:
            traversal_ticks.setdefault(run_station, []).append(run_len)
    return {
        sid: sum(ticks) / len(ticks) for sid, ticks in sorted(traversal_ticks.items())
    }
