"""Time-tag streams and their on-disk formats.

A stream is the chronologically sorted record of trigger edges and detector
clicks, timestamped in integer picoseconds. Two interchange formats are
supported: a CSV form (`channel,t_ps` with channels T/A1/A2) and a
length-prefixed little-endian binary form (u64 count, then u8 channel +
u64 t_ps per event). Both round-trip bit-exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import EmptyStream


class Channel(IntEnum):
    TRIGGER = 0
    APD1 = 1
    APD2 = 2


_LABELS = {Channel.TRIGGER: "T", Channel.APD1: "A1", Channel.APD2: "A2"}
_CODES = {label: int(ch) for ch, label in _LABELS.items()}


@dataclass
class TimeTagStream:
    """Ordered detection/trigger events as parallel channel and time arrays."""

    channels: np.ndarray  # uint8 Channel codes
    times_ps: np.ndarray  # int64 picosecond timestamps

    def __post_init__(self) -> None:
        self.channels = np.asarray(self.channels, dtype=np.uint8)
        self.times_ps = np.asarray(self.times_ps, dtype=np.int64)
        if self.channels.shape != self.times_ps.shape:
            raise ValueError("channels and times_ps must have equal length")
        if self.times_ps.size > 1 and np.any(np.diff(self.times_ps) < 0):
            raise ValueError("timestamps must be non-decreasing")

    def __len__(self) -> int:
        return int(self.channels.size)

    def events(self) -> Iterator[tuple[Channel, int]]:
        for code, t in zip(self.channels, self.times_ps):
            yield Channel(int(code)), int(t)

    @property
    def trigger_times_ps(self) -> np.ndarray:
        return self.times_ps[self.channels == Channel.TRIGGER]

    def detections(self) -> tuple[np.ndarray, np.ndarray]:
        """Non-trigger events as (channel codes, times)."""
        mask = self.channels != Channel.TRIGGER
        return self.channels[mask], self.times_ps[mask]

    def detection_times(self, channel: Channel) -> np.ndarray:
        return self.times_ps[self.channels == channel]

    def translated(self, offset_ps: int) -> "TimeTagStream":
        return TimeTagStream(self.channels.copy(), self.times_ps + int(offset_ps))

    def to_bytes(self) -> bytes:
        payload = bytearray(struct.pack("<Q", len(self)))
        body = np.empty(len(self), dtype=[("ch", "<u1"), ("t", "<u8")])
        body["ch"] = self.channels
        body["t"] = self.times_ps.astype(np.uint64)
        payload.extend(body.tobytes())
        return bytes(payload)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "TimeTagStream":
        if len(blob) < 8:
            raise EmptyStream("binary stream shorter than its length prefix")
        (count,) = struct.unpack_from("<Q", blob, 0)
        body = np.frombuffer(blob, dtype=[("ch", "<u1"), ("t", "<u8")], count=count, offset=8)
        return cls(body["ch"].copy(), body["t"].astype(np.int64))


def merge_sorted(parts: list[tuple[np.ndarray, np.ndarray]]) -> TimeTagStream:
    """Merge (channel, time) array pairs into one time-sorted stream.

    Ties are broken by channel code so the result is unique for a given
    event multiset, keeping replay byte-exact.
    """
    if parts:
        channels = np.concatenate([np.asarray(c, dtype=np.uint8) for c, _ in parts])
        times = np.concatenate([np.asarray(t, dtype=np.int64) for _, t in parts])
    else:
        channels = np.empty(0, dtype=np.uint8)
        times = np.empty(0, dtype=np.int64)
    order = np.lexsort((channels, times))
    return TimeTagStream(channels[order], times[order])


def write_stream_csv(stream: TimeTagStream, path: str | Path) -> None:
    labels = np.array([_LABELS[Channel(i)] for i in range(3)])
    with open(path, "w", newline="") as fh:
        fh.write("channel,t_ps\n")
        for label, t in zip(labels[stream.channels], stream.times_ps):
            fh.write(f"{label},{t}\n")


def read_stream_csv(path: str | Path) -> TimeTagStream:
    channels: list[int] = []
    times: list[int] = []
    with open(path, newline="") as fh:
        header = fh.readline().strip()
        if header != "channel,t_ps":
            raise EmptyStream(f"unexpected stream CSV header: {header!r}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            label, t = line.split(",")
            channels.append(_CODES[label])
            times.append(int(t))
    return TimeTagStream(np.array(channels, dtype=np.uint8), np.array(times, dtype=np.int64))


def write_stream_binary(stream: TimeTagStream, path: str | Path) -> None:
    Path(path).write_bytes(stream.to_bytes())


def read_stream_binary(path: str | Path) -> TimeTagStream:
    return TimeTagStream.from_bytes(Path(path).read_bytes())
