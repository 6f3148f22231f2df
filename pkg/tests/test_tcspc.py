import io
import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st

from snspd_lab.model import ReadoutModel
from snspd_lab.tcspc import (HEADER, Histogram, TimeTags, TimetagFormatError, apply_tcspc,
                             deadtime_filter, interarrival_histogram, iter_timetag_chunks,
                             read_timetag_file, read_timetags, sync_delay_histogram, to_ps,
                             write_timetags)

NS = 1000


def naive_deadtime(times, dead):
    kept, last = [], None
    for t in times:
        if last is None or t - last >= dead:
            kept.append(t)
            last = t
    return np.array(kept, dtype=np.int64)


def naive_lags(times, max_lag):
    return [b - a for i, a in enumerate(times) for b in times[i + 1:] if 0 < b - a <= max_lag]


def random_tags(n, channels, seed):
    rng = np.random.default_rng(seed)
    t = np.sort(rng.integers(0, 10**12, n, dtype=np.uint64))
    return TimeTags(rng.integers(0, channels, n).astype(np.uint16), t, channels)


class TestApplyTcspc:
    def test_direct_rule(self):
        ro = ReadoutModel(tcspc_sigma=0.0, tcspc_dead_time=20e-9)
        out = apply_tcspc(np.array([0, 10 * NS, 21 * NS]), ro, 0)
        assert out.tolist() == [0, 21 * NS]

    def test_boundary_is_kept(self):
        ro = ReadoutModel(tcspc_sigma=0.0, tcspc_dead_time=20e-9)
        assert apply_tcspc(np.array([0, 20 * NS, 39 * NS]), ro, 0).tolist() == [0, 20 * NS]

    @given(st.lists(st.integers(0, 10**6), max_size=200), st.integers(0, 50_000))
    def test_filter_matches_naive(self, raw, dead):
        t = np.sort(np.array(raw, dtype=np.int64))
        assert np.array_equal(deadtime_filter(t, dead), naive_deadtime(t, dead))

    @given(st.lists(st.integers(0, 10**9), min_size=1, max_size=300), st.integers(1, 10**6),
           st.integers(0, 2**32))
    def test_gaps_and_subset(self, raw, dead, seed):
        ro = ReadoutModel(tcspc_sigma=50e-12, tcspc_dead_time=dead / 1e12)
        t = np.sort(np.array(raw, dtype=np.int64)) + 10**6
        out = apply_tcspc(t, ro, seed)
        assert out.size >= 1
        assert np.all(np.diff(out) >= dead)

    def test_zero_jitter_keeps_first_and_subset(self):
        rng = np.random.default_rng(1)
        t = np.sort(rng.integers(0, 10**9, 1000))
        ro = ReadoutModel(tcspc_sigma=0.0, tcspc_dead_time=20e-9)
        out = apply_tcspc(t, ro, 0)
        assert out[0] == t[0]
        assert np.isin(out, t).all()

    def test_jitter_width_75ps(self):
        sigma = 75e-12 / 2.3548
        assert sigma == pytest.approx(31.85e-12, abs=0.05e-12)
        ro = ReadoutModel(tcspc_sigma=sigma, tcspc_dead_time=0.0)
        base = np.arange(1, 200_001, dtype=np.int64) * 10**6
        out = apply_tcspc(base, ro, 3)
        d = out - base
        assert 2.3548 * d.std() == pytest.approx(75.0, rel=0.01)

    @pytest.mark.parametrize("rate", [1e6, 1e7, 3e7])
    def test_nonparalyzable_rate(self, rate):
        rng = np.random.default_rng(int(rate))
        tau, duration = 20e-9, 0.05
        n = rng.poisson(rate * duration)
        t = np.sort(to_ps(rng.uniform(0, duration, n)))
        out = apply_tcspc(t, ReadoutModel(tcspc_sigma=0.0, tcspc_dead_time=tau), rng)
        expect = rate * duration / (1 + rate * tau)
        sd = np.sqrt(rate * duration) / (1 + rate * tau) ** 1.5
        assert abs(out.size - expect) < 3 * sd + 1


class TestCodec:
    def test_round_trip_1e6(self):
        tags = random_tags(10**6, 64, 0)
        blob = write_timetags(tags)
        back = read_timetags(blob)
        assert back.channel_count == 64
        assert np.array_equal(back.time_ps, tags.time_ps)
        assert np.array_equal(back.channel, tags.channel)
        assert write_timetags(back) == blob

    def test_layout_is_bit_exact(self):
        tags = TimeTags([1, 0], [5, 2**40], 3)
        blob = write_timetags(tags)
        assert blob[:8] == b"SNTT" + struct.pack("<HH", 1, 3)
        assert blob[8:] == struct.pack("<HQ", 1, 5) + struct.pack("<HQ", 0, 2**40)

    def test_bad_magic(self):
        blob = bytearray(write_timetags(random_tags(10, 4, 1)))
        blob[:4] = b"XXXX"
        with pytest.raises(TimetagFormatError, match="magic"):
            read_timetags(bytes(blob))

    def test_bad_version(self):
        blob = HEADER.pack(b"SNTT", 9, 1)
        with pytest.raises(TimetagFormatError, match="version"):
            read_timetags(blob)

    def test_truncation(self):
        blob = write_timetags(random_tags(10, 4, 2))
        with pytest.raises(TimetagFormatError):
            read_timetags(blob[:-3])
        with pytest.raises(TimetagFormatError):
            read_timetags(blob[:5])

    def test_channel_out_of_range(self):
        blob = bytearray(write_timetags(TimeTags([0], [1], 1)))
        blob[8:10] = struct.pack("<H", 7)
        with pytest.raises(TimetagFormatError, match="channel"):
            read_timetags(bytes(blob))
        with pytest.raises(TimetagFormatError):
            write_timetags(TimeTags([3], [1], 2))

    def test_non_monotone(self):
        raw = HEADER.pack(b"SNTT", 1, 1) + struct.pack("<HQ", 0, 9) + struct.pack("<HQ", 0, 3)
        with pytest.raises(TimetagFormatError, match="monoton|sorted"):
            read_timetags(raw)
        assert len(read_timetags(raw, strict=False)) == 2
        with pytest.raises(TimetagFormatError):
            write_timetags(TimeTags([0, 0], [9, 3], 1))

    def test_streaming_reader(self, tmp_path):
        tags = random_tags(5000, 8, 3)
        blob = write_timetags(tags)
        chunks = [rec for count, rec in iter_timetag_chunks(io.BytesIO(blob), chunk_records=777)]
        assert len(chunks) == 7
        assert sum(len(c) for c in chunks) == 5000
        assert np.array_equal(np.concatenate([c["time_ps"] for c in chunks]), tags.time_ps)
        path = tmp_path / "t.sntt"
        path.write_bytes(blob)
        assert np.array_equal(read_timetag_file(path).channel, tags.channel)

    def test_empty(self):
        back = read_timetags(write_timetags(TimeTags([], [], 5)))
        assert len(back) == 0 and back.channel_count == 5

    def test_merge_is_sorted_with_channel_ties(self):
        tags = TimeTags.merge({1: np.array([5, 7]), 0: np.array([5, 6])}, 2)
        assert tags.time_ps.tolist() == [5, 5, 6, 7]
        assert tags.channel.tolist() == [0, 1, 0, 1]


class TestHistograms:
    def test_interarrival_hand_example(self):
        h = interarrival_histogram(np.array([0, 30 * NS, 60 * NS]), NS, 100 * NS)
        assert h.count_at(30 * NS) == 2
        assert h.count_at(60 * NS) == 1
        assert h.total == 3

    @given(st.lists(st.integers(0, 5000), max_size=80), st.integers(1, 300), st.integers(1, 3000))
    def test_interarrival_matches_pairs(self, raw, width, max_lag):
        t = np.sort(np.array(raw, dtype=np.int64))
        h = interarrival_histogram(t, width, max_lag)
        lags = naive_lags(t.tolist(), max_lag)
        assert h.total == len(lags)
        ref = np.bincount(np.array(lags, dtype=np.int64) // width, minlength=h.counts.size)
        assert np.array_equal(h.counts, ref[: h.counts.size])

    def test_sync_delta(self):
        period = 10**6
        t = np.arange(1000, dtype=np.int64) * period + 500
        h = sync_delay_histogram(t, period, 1)
        assert np.flatnonzero(h.counts).tolist() == [500]
        assert h.total == 1000

    @given(st.lists(st.integers(0, 10**7), max_size=200), st.integers(1, 1000),
           st.integers(1, 50))
    def test_sync_conserves_events(self, raw, period, width):
        h = sync_delay_histogram(np.array(raw, dtype=np.int64), period, width)
        assert h.total == len(raw)

    def test_left_closed_bins(self):
        h = Histogram(0, 10, np.zeros(3))
        assert h.bin_index(10) == 1 and h.bin_index(9.999) == 0

    def test_merge_associative(self):
        rng = np.random.default_rng(5)
        a, b, c = (sync_delay_histogram(rng.integers(0, 10**6, 100), 1000, 10) for _ in range(3))
        assert np.array_equal(a.merge(b).merge(c).counts, a.merge(b.merge(c)).counts)

    def test_csv(self):
        h = Histogram(-5, 10, [1, 2])
        assert h.to_csv() == "bin_start_ps,count\n-5,1\n5,2\n"
