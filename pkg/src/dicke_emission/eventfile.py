"""Binary photon event files (``PHEV`` version 1) and CSV export.

Layout, little-endian::

    header (24 bytes): magic b"PHEV", version u32, record count u64,
                       run-start epoch ns u64
    record (16 bytes): camera u8, reserved u8, x u16, y u16,
                       reserved u16, timestamp_ps u64
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .detector import EVENT_DTYPE
from .errors import EventFileError, EventFileVersionError

MAGIC = b"PHEV"
VERSION = 1
HEADER = struct.Struct("<4sIQQ")
assert HEADER.size == 24


@dataclass(frozen=True)
class EventFileHeader:
    version: int
    count: int
    run_start_ns: int


def write_events(events: np.ndarray, path, run_start_ns: int = 0) -> None:
    events = np.ascontiguousarray(events, dtype=EVENT_DTYPE)
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, VERSION, len(events), int(run_start_ns)))
        fh.write(events.tobytes())


def parse_events(data: bytes):
    """Decode an event file held in memory; returns ``(events, header)``."""
    if len(data) < HEADER.size:
        raise EventFileError("truncated header", 0)
    magic, version, count, start = HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise EventFileError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise EventFileVersionError(version)
    body = len(data) - HEADER.size
    full, partial = divmod(body, EVENT_DTYPE.itemsize)
    if partial:
        raise EventFileError("truncated record", HEADER.size + full * EVENT_DTYPE.itemsize)
    if full != count:
        where = HEADER.size + min(full, count) * EVENT_DTYPE.itemsize
        raise EventFileError(f"header declares {count} records but file holds {full}", where)
    events = np.frombuffer(data, dtype=EVENT_DTYPE, offset=HEADER.size, count=count).copy()
    bad = np.flatnonzero((events["camera"] < 1) | (events["camera"] > 2))
    if bad.size:
        raise EventFileError(f"invalid camera id {events['camera'][bad[0]]}",
                             HEADER.size + int(bad[0]) * EVENT_DTYPE.itemsize)
    return events, EventFileHeader(version, count, start)


def read_events(path):
    return parse_events(Path(path).read_bytes())


def export_csv(events: np.ndarray, path) -> None:
    with open(path, "w") as fh:
        fh.write("camera,timestamp_ps,x,y\n")
        for cam, ts, x, y in zip(events["camera"], events["timestamp"], events["x"], events["y"]):
            fh.write(f"{cam},{ts},{x},{y}\n")
