"""Time-tagging electronics, the SNTT timetag format and histogram kernels.

Timestamps inside this module are integer picoseconds (int64 while being
processed, uint64 on the wire).

SNTT layout, little-endian::

    b"SNTT" | u16 version | u16 channel_count | N x (u16 channel, u64 time_ps)
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Iterator, NamedTuple

import numpy as np

from . import _kernels
from .model import ReadoutModel

MAGIC = b"SNTT"
VERSION = 1
HEADER = struct.Struct("<4sHH")
RECORD_DTYPE = np.dtype([("channel", "<u2"), ("time_ps", "<u8")])

PS = 1e12


class TimetagFormatError(ValueError):
    pass


class TimeTag(NamedTuple):
    channel: int
    time_ps: int


@dataclass
class TimeTags:
    """Column-wise timetag stream."""

    channel: np.ndarray
    time_ps: np.ndarray
    channel_count: int = 0

    def __post_init__(self):
        self.channel = np.asarray(self.channel, dtype=np.uint16)
        self.time_ps = np.asarray(self.time_ps, dtype=np.uint64)
        if self.channel.shape != self.time_ps.shape:
            raise ValueError("channel and time_ps must have equal length")
        if not self.channel_count and self.channel.size:
            self.channel_count = int(self.channel.max()) + 1

    def __len__(self) -> int:
        return int(self.time_ps.size)

    def __iter__(self) -> Iterator[TimeTag]:
        for c, t in zip(self.channel.tolist(), self.time_ps.tolist()):
            yield TimeTag(c, t)

    def for_channel(self, channel: int) -> np.ndarray:
        return self.time_ps[self.channel == channel].astype(np.int64)

    @classmethod
    def merge(cls, per_channel: dict[int, np.ndarray], channel_count: int) -> "TimeTags":
        """Deterministic k-way merge: sort by time, ties by channel."""
        chans = [np.full(len(v), k, dtype=np.uint16) for k, v in sorted(per_channel.items())]
        times = [np.asarray(v, dtype=np.uint64) for _, v in sorted(per_channel.items())]
        if not times:
            return cls(np.zeros(0, np.uint16), np.zeros(0, np.uint64), channel_count)
        ch = np.concatenate(chans)
        t = np.concatenate(times)
        order = np.lexsort((ch, t))
        return cls(ch[order], t[order], channel_count)


def to_ps(times_s) -> np.ndarray:
    """Quantize seconds to integer picoseconds, round-to-nearest."""
    return np.rint(np.asarray(times_s, dtype=float) * PS).astype(np.int64)


def deadtime_filter(times_ps: np.ndarray, dead_ps: int) -> np.ndarray:
    times_ps = np.ascontiguousarray(times_ps, dtype=np.int64)
    if dead_ps <= 0:
        return times_ps.copy()
    return times_ps[_kernels.nonparalyzable_mask(times_ps, np.int64(dead_ps))]


def apply_tcspc(events_ps: np.ndarray, readout: ReadoutModel,
                rng: np.random.Generator | int | None) -> np.ndarray:
    """Add channel jitter, re-sort, then apply the non-paralyzable dead time.

    Events that jitter below t=0 are dropped before the dead-time stage.
    """
    rng = np.random.default_rng(rng)
    t = np.asarray(events_ps, dtype=np.int64)
    if readout.tcspc_sigma > 0 and t.size:
        t = t + np.rint(rng.normal(0.0, readout.tcspc_sigma * PS, t.size)).astype(np.int64)
        t = np.sort(t)
    t = t[t >= 0]
    return deadtime_filter(t, int(round(readout.tcspc_dead_time * PS)))


# --------------------------------------------------------------------------
# wire format


def write_timetags(tags: TimeTags, channel_count: int | None = None) -> bytes:
    buf = io.BytesIO()
    write_timetags_to(buf, tags, channel_count)
    return buf.getvalue()


def write_timetags_to(fh: BinaryIO, tags: TimeTags, channel_count: int | None = None) -> None:
    count = channel_count if channel_count is not None else tags.channel_count
    if len(tags) and int(tags.channel.max()) >= count:
        raise TimetagFormatError(f"channel {int(tags.channel.max())} >= channel_count {count}")
    if len(tags) > 1 and np.any(np.diff(tags.time_ps.astype(np.int64)) < 0):
        raise TimetagFormatError("timetags must be time-sorted before writing")
    fh.write(HEADER.pack(MAGIC, VERSION, count))
    rec = np.empty(len(tags), dtype=RECORD_DTYPE)
    rec["channel"] = tags.channel
    rec["time_ps"] = tags.time_ps
    fh.write(rec.tobytes())


def _parse_header(head: bytes) -> int:
    if len(head) < HEADER.size:
        raise TimetagFormatError("truncated header")
    magic, version, count = HEADER.unpack(head[:HEADER.size])
    if magic != MAGIC:
        raise TimetagFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise TimetagFormatError(f"unsupported version {version}")
    return count


def _check_records(rec: np.ndarray, count: int, strict: bool, prev: int | None) -> None:
    if rec.size and int(rec["channel"].max()) >= count:
        raise TimetagFormatError(f"channel {int(rec['channel'].max())} >= channel_count {count}")
    if strict and rec.size:
        t = rec["time_ps"]
        if np.any(t[1:] < t[:-1]) or (prev is not None and int(t[0]) < prev):
            raise TimetagFormatError("non-monotone timestamps")


def read_timetags(data: bytes, strict: bool = True) -> TimeTags:
    count = _parse_header(data)
    body = memoryview(data)[HEADER.size:]
    if len(body) % RECORD_DTYPE.itemsize:
        raise TimetagFormatError(
            f"truncated record: {len(body)} payload bytes is not a multiple of "
            f"{RECORD_DTYPE.itemsize}")
    rec = np.frombuffer(body, dtype=RECORD_DTYPE)
    _check_records(rec, count, strict, None)
    return TimeTags(rec["channel"].copy(), rec["time_ps"].copy(), count)


def iter_timetag_chunks(fh: BinaryIO, chunk_records: int = 1 << 20,
                        strict: bool = True) -> Iterator[tuple[int, np.ndarray]]:
    """Single-pass streaming reader yielding (channel_count, record chunk)."""
    count = _parse_header(fh.read(HEADER.size))
    size = RECORD_DTYPE.itemsize
    prev = None
    while True:
        raw = fh.read(chunk_records * size)
        if not raw:
            return
        if len(raw) % size:
            raise TimetagFormatError("truncated record at end of stream")
        rec = np.frombuffer(raw, dtype=RECORD_DTYPE)
        _check_records(rec, count, strict, prev)
        prev = int(rec["time_ps"][-1])
        yield count, rec


def read_timetag_file(path, strict: bool = True) -> TimeTags:
    with open(path, "rb") as fh:
        return read_timetags(fh.read(), strict=strict)


# --------------------------------------------------------------------------
# histograms


@dataclass
class Histogram:
    origin_ps: int
    bin_width_ps: int
    counts: np.ndarray
    underflow: int = 0
    overflow: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.bin_width_ps <= 0:
            raise ValueError("bin_width_ps must be positive")
        self.counts = np.asarray(self.counts, dtype=np.uint64)

    @property
    def bin_starts_ps(self) -> np.ndarray:
        return self.origin_ps + self.bin_width_ps * np.arange(self.counts.size, dtype=np.int64)

    @property
    def bin_centers_ps(self) -> np.ndarray:
        return self.bin_starts_ps + 0.5 * self.bin_width_ps

    @property
    def total(self) -> int:
        return int(self.counts.sum()) + self.underflow + self.overflow

    def bin_index(self, t_ps: float) -> int:
        return int(np.floor((t_ps - self.origin_ps) / self.bin_width_ps))

    def count_at(self, t_ps: float) -> int:
        k = self.bin_index(t_ps)
        return int(self.counts[k]) if 0 <= k < self.counts.size else 0

    def merge(self, other: "Histogram") -> "Histogram":
        if (other.origin_ps, other.bin_width_ps, other.counts.size) != (
                self.origin_ps, self.bin_width_ps, self.counts.size):
            raise ValueError("histogram axes differ")
        return Histogram(self.origin_ps, self.bin_width_ps, self.counts + other.counts,
                         self.underflow + other.underflow, self.overflow + other.overflow)

    def to_csv(self) -> str:
        lines = ["bin_start_ps,count"]
        lines += [f"{s},{c}" for s, c in zip(self.bin_starts_ps.tolist(), self.counts.tolist())]
        return "\n".join(lines) + "\n"


def _bin(values: np.ndarray, origin_ps: int, bin_width_ps: int, n_bins: int) -> Histogram:
    idx = np.floor_divide(values - origin_ps, bin_width_ps)
    under = int(np.count_nonzero(idx < 0))
    over = int(np.count_nonzero(idx >= n_bins))
    inside = idx[(idx >= 0) & (idx < n_bins)]
    counts = np.bincount(inside, minlength=n_bins).astype(np.uint64)
    return Histogram(origin_ps, bin_width_ps, counts, under, over)


def interarrival_histogram(events_ps: np.ndarray, bin_width_ps: int, max_lag_ps: int,
                           origin_ps: int = 0) -> Histogram:
    """Start-multi-stop histogram of all lags 0 < t_j - t_i <= max_lag.

    Bins are left-closed; lags outside [origin, origin + n*width) land in the
    under/overflow counters.
    """
    t = np.asarray(events_ps, dtype=np.int64)
    n_bins = max(1, int(np.ceil((max_lag_ps - origin_ps) / bin_width_ps)))
    hist = Histogram(origin_ps, bin_width_ps, np.zeros(n_bins, np.uint64))
    for k in range(1, t.size):
        lags = t[k:] - t[:-k]
        # sorted input: once every k-step lag exceeds the window, larger k do too
        if lags.min() > max_lag_ps:
            break
        lags = lags[(lags > 0) & (lags <= max_lag_ps)]
        hist = hist.merge(_bin(lags, origin_ps, bin_width_ps, n_bins))
    return hist


def sync_delay_histogram(events_ps: np.ndarray, sync_period_ps: int, bin_width_ps: int,
                         origin_ps: int = 0, n_bins: int | None = None) -> Histogram:
    """Histogram of event delays folded modulo the sync period."""
    if sync_period_ps <= 0:
        raise ValueError("sync_period must be positive")
    delays = np.mod(np.asarray(events_ps, dtype=np.int64), np.int64(sync_period_ps))
    if n_bins is None:
        n_bins = int(np.ceil((sync_period_ps - origin_ps) / bin_width_ps))
    return _bin(delays, origin_ps, bin_width_ps, n_bins)
