"""Two-channel photodetection click streams and the PSTM timestamp file format.

PSTM layout (little-endian)::

    header  16 bytes  magic b"PSTM", version u16, channel count u16,
                      window count u32, window length in ns u32
    record  13 bytes  window id u32, channel u8, timestamp u64 (ps in window)

Records are sorted by (window, timestamp, channel). The last header field is
reserved in version 1 of the layout; this package stores the window length
there (0 means unknown, in which case readers fall back to the last click).
"""
from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import StreamFormatError, UnsortedInput

MAGIC = b"PSTM"
VERSION = 1
HEADER = struct.Struct("<4sHHII")
RECORD = np.dtype([("window", "<u4"), ("channel", "u1"), ("time", "<u8")])
PS = 1e-12

assert HEADER.size == 16 and RECORD.itemsize == 13


@dataclass(eq=False)
class ClickStream:
    """Clicks of two detectors, each as (window id, picosecond timestamp) arrays."""

    times: tuple  # per channel, int64 ps from window start
    windows: tuple  # per channel, int64 window ids
    n_windows: int
    window_ps: int  # window length in ps
    seed: int | None = field(default=None)

    def __post_init__(self):
        self.times = tuple(np.asarray(t, dtype=np.int64) for t in self.times)
        self.windows = tuple(np.asarray(w, dtype=np.int64) for w in self.windows)
        if len(self.times) != len(self.windows):
            raise ValueError("times and windows must have one array per channel")
        self.n_windows = int(self.n_windows)
        self.window_ps = int(self.window_ps)

    @classmethod
    def empty(cls, n_windows: int, window_ps: int, n_channels: int = 2, seed=None):
        z = tuple(np.zeros(0, np.int64) for _ in range(n_channels))
        return cls(z, z, n_windows, window_ps, seed)

    @property
    def n_channels(self) -> int:
        return len(self.times)

    @property
    def window_duration(self) -> float:
        return self.window_ps * PS

    @property
    def total_duration(self) -> float:
        return self.n_windows * self.window_duration

    def counts(self) -> tuple:
        return tuple(int(t.size) for t in self.times)

    def validate(self) -> None:
        """Check the ordering and range invariants; raise UnsortedInput if broken."""
        for c, (t, w) in enumerate(zip(self.times, self.windows)):
            if t.size != w.size:
                raise ValueError(f"channel {c}: times and windows differ in length")
            if t.size == 0:
                continue
            if t.min() < 0 or (self.window_ps > 0 and t.max() >= self.window_ps):
                raise UnsortedInput(f"channel {c}: timestamp outside its window")
            if w.min() < 0 or w.max() >= self.n_windows:
                raise UnsortedInput(f"channel {c}: window id out of range")
            dw = np.diff(w)
            dt = np.diff(t)
            if np.any(dw < 0) or np.any((dw == 0) & (dt <= 0)):
                raise UnsortedInput(f"channel {c}: clicks not strictly increasing within windows")

    def select_windows(self, ids) -> "ClickStream":
        """Sub-stream of the given window ids (ids keep their numbering)."""
        ids = np.asarray(ids)
        keep = [np.isin(w, ids) for w in self.windows]
        return ClickStream(
            tuple(t[k] for t, k in zip(self.times, keep)),
            tuple(w[k] for w, k in zip(self.windows, keep)),
            self.n_windows,
            self.window_ps,
            self.seed,
        )

    def __eq__(self, other):
        if not isinstance(other, ClickStream):
            return NotImplemented
        return (
            self.n_windows == other.n_windows
            and self.window_ps == other.window_ps
            and self.n_channels == other.n_channels
            and all(np.array_equal(a, b) for a, b in zip(self.times, other.times))
            and all(np.array_equal(a, b) for a, b in zip(self.windows, other.windows))
        )


def to_records(stream: ClickStream) -> np.ndarray:
    parts = []
    for c, (t, w) in enumerate(zip(stream.times, stream.windows)):
        rec = np.empty(t.size, dtype=RECORD)
        rec["window"] = w
        rec["channel"] = c
        rec["time"] = t
        parts.append(rec)
    rec = np.concatenate(parts) if parts else np.empty(0, RECORD)
    order = np.lexsort((rec["channel"], rec["time"], rec["window"]))
    return rec[order]


def write_stream(stream: ClickStream, path) -> Path:
    """Write ``stream`` as PSTM; the file is replaced atomically."""
    stream.validate()
    window_ns = stream.window_ps // 1000
    if window_ns * 1000 != stream.window_ps or window_ns >= 2**32:
        raise StreamFormatError("window length must be a whole number of ns below 2**32 ns")
    header = HEADER.pack(MAGIC, VERSION, stream.n_channels, stream.n_windows, window_ns)
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name, suffix=".tmp")
    try:
        os.chmod(tmp, 0o644)
        with os.fdopen(fd, "wb") as fh:
            fh.write(header)
            fh.write(to_records(stream).tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def read_stream(path) -> ClickStream:
    data = Path(path).read_bytes()
    if len(data) < HEADER.size:
        raise StreamFormatError("file shorter than PSTM header")
    magic, version, n_channels, n_windows, window_ns = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise StreamFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise StreamFormatError(f"unsupported PSTM version {version}")
    body = len(data) - HEADER.size
    if body % RECORD.itemsize:
        raise StreamFormatError("truncated record")
    rec = np.frombuffer(data, dtype=RECORD, offset=HEADER.size)
    if rec.size and rec["channel"].max() >= n_channels:
        raise StreamFormatError("record channel exceeds header channel count")
    window_ps = window_ns * 1000
    if window_ps == 0 and rec.size:
        window_ps = int(rec["time"].max()) + 1
    times, windows = [], []
    for c in range(n_channels):
        sel = rec[rec["channel"] == c]
        times.append(sel["time"].astype(np.int64))
        windows.append(sel["window"].astype(np.int64))
    stream = ClickStream(tuple(times), tuple(windows), n_windows, window_ps)
    stream.validate()
    return stream
