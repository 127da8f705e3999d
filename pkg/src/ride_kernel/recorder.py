"""Single-file interleaved sensor recording (bag format).

File layout: an 8-byte ASCII header ``RIDEBAG1`` followed by entries of

    timestamp f64 BE | channel u8 | length u32 BE | payload

Timestamps are forced non-decreasing on write. The reader is strict: a
corrupt header is refused outright, while a truncated final record is
reported as TruncatedTail carrying every complete entry before it.
"""

from __future__ import annotations

import os
import struct
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Callable, Optional

BAG_HEADER = b"RIDEBAG1"
ENTRY_HEADER = struct.Struct(">dBI")  # 13 bytes
ENTRY_OVERHEAD = ENTRY_HEADER.size

CHAN_CAM = 1
CHAN_SCAN = 2
CHAN_TF = 3
CHANNELS = (CHAN_CAM, CHAN_SCAN, CHAN_TF)

REC_CAM = 1
REC_SCAN = 2
REC_TF = 4
MASK_ALL = REC_CAM | REC_SCAN | REC_TF

_MASK_TO_CHANNEL = {REC_CAM: CHAN_CAM, REC_SCAN: CHAN_SCAN, REC_TF: CHAN_TF}

FLUSH_EVERY_ENTRIES = 50
FLUSH_EVERY_SECONDS = 1.0


class BagError(Exception):
    pass


class DirNotWritable(BagError):
    pass


class AlreadyRecording(BagError):
    pass


class AlreadyClosed(BagError):
    pass


class BadMagic(BagError):
    pass


class BadChannel(BagError):
    pass


class BadMask(BagError):
    pass


class TruncatedTail(BagError):
    """Raised for a partial trailing record; complete entries ride along."""

    def __init__(self, entries: list["RecordEntry"], missing: int):
        super().__init__(f"truncated final record ({missing} bytes missing)")
        self.entries = entries
        self.missing = missing


@dataclass
class RecordEntry:
    timestamp: float
    channel: int
    payload: bytes


def channels_for_mask(mask: int) -> set[int]:
    if not 1 <= mask <= MASK_ALL:
        raise BadMask(f"record mask must be in [1, {MASK_ALL}], got {mask}")
    return {chan for bit, chan in _MASK_TO_CHANNEL.items() if mask & bit}


def bag_filename(when: Optional[datetime] = None) -> str:
    when = when or datetime.now(timezone.utc)
    return when.astimezone(timezone.utc).strftime("rec_%Y%m%d_%H%M%S.bag")


class BagWriter:
    def __init__(self, directory: str, mask: int, warn: Optional[Callable[[str], None]] = None):
        self.channels = channels_for_mask(mask)
        self.mask = mask
        self._warn = warn or (lambda msg: None)
        self._lock = threading.Lock()
        self._last_timestamp = float("-inf")
        self._counts = {chan: 0 for chan in CHANNELS}
        self._first_ts: Optional[float] = None
        self._last_ts: Optional[float] = None
        self._since_flush = 0
        self._last_flush = time.monotonic()
        self._closed = False

        name = bag_filename()
        self.path = os.path.join(directory, name)
        try:
            # exclusive create; same-second reopen gets a numeric suffix
            counter = 1
            while True:
                try:
                    self._fh = open(self.path, "xb")
                    break
                except FileExistsError:
                    counter += 1
                    self.path = os.path.join(directory, name[:-4] + f"_{counter}.bag")
        except OSError as exc:
            raise DirNotWritable(f"cannot create bag in {directory!r}: {exc}") from exc
        self._fh.write(BAG_HEADER)
        self._fh.flush()

    def append(self, entry: RecordEntry) -> None:
        if entry.channel not in CHANNELS:
            raise BadChannel(f"channel must be one of {CHANNELS}, got {entry.channel}")
        with self._lock:
            if self._closed:
                raise AlreadyClosed(self.path)
            ts = entry.timestamp
            if ts < self._last_timestamp:
                self._warn(
                    f"timestamp regression {ts} -> clamped to {self._last_timestamp}"
                )
                ts = self._last_timestamp
            self._last_timestamp = ts
            self._fh.write(ENTRY_HEADER.pack(ts, entry.channel, len(entry.payload)))
            self._fh.write(entry.payload)
            self._counts[entry.channel] += 1
            if self._first_ts is None:
                self._first_ts = ts
            self._last_ts = ts
            self._since_flush += 1
            now = time.monotonic()
            if (
                self._since_flush >= FLUSH_EVERY_ENTRIES
                or now - self._last_flush >= FLUSH_EVERY_SECONDS
            ):
                self._fh.flush()
                self._since_flush = 0
                self._last_flush = now

    def close(self) -> dict:
        with self._lock:
            if self._closed:
                raise AlreadyClosed(self.path)
            self._closed = True
            self._fh.flush()
            self._fh.close()
            duration = 0.0
            if self._first_ts is not None and self._last_ts is not None:
                duration = self._last_ts - self._first_ts
            return {"counts": dict(self._counts), "duration": duration, "path": self.path}

    @property
    def closed(self) -> bool:
        return self._closed


def read_bag(path: str) -> list[RecordEntry]:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != BAG_HEADER:
        raise BadMagic(f"{path!r} does not start with {BAG_HEADER!r}")
    entries: list[RecordEntry] = []
    offset = 8
    total = len(data)
    while offset < total:
        if total - offset < ENTRY_OVERHEAD:
            raise TruncatedTail(entries, ENTRY_OVERHEAD - (total - offset))
        ts, channel, length = ENTRY_HEADER.unpack_from(data, offset)
        end = offset + ENTRY_OVERHEAD + length
        if end > total:
            raise TruncatedTail(entries, end - total)
        entries.append(RecordEntry(ts, channel, data[offset + ENTRY_OVERHEAD : end]))
        offset = end
    return entries


class Recorder:
    """Owns the single active BagWriter behind start/stop recording."""

    def __init__(self, data_dir: str, warn: Optional[Callable[[str], None]] = None):
        self.data_dir = data_dir
        self._warn = warn
        self._lock = threading.Lock()
        self._writer: Optional[BagWriter] = None

    @property
    def active(self) -> bool:
        with self._lock:
            return self._writer is not None

    def start(self, mask: int) -> BagWriter:
        with self._lock:
            if self._writer is not None:
                raise AlreadyRecording(self._writer.path)
            os.makedirs(self.data_dir, exist_ok=True)
            self._writer = BagWriter(self.data_dir, mask, warn=self._warn)
            return self._writer

    def stop(self) -> dict:
        with self._lock:
            if self._writer is None:
                raise AlreadyClosed("no active recording")
            summary = self._writer.close()
            self._writer = None
            return summary

    def capture(self, channel: int, timestamp: float, payload: bytes) -> None:
        """Append one entry if recording is active and the channel is enabled."""
        with self._lock:
            writer = self._writer
        if writer is None or channel not in writer.channels:
            return
        writer.append(RecordEntry(timestamp, channel, payload))
