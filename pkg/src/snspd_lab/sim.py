"""Discrete-event simulation of photon, dark and crosstalk arrivals per channel.

Each channel draws from its own substreams (see ``model.substream_seed``), so
results depend only on (config, seed) and never on how channels are scheduled.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .dynamics import dark_rate, jitter_sigma
from .model import (ChannelConfig, ReceiverConfig, StreamKind, ValidatedConfig,
                    substream_rng, validate_config)
from .tcspc import PS, TimeTags, apply_tcspc, to_ps

KIND_NAMES = {_kernels.PHOTON: "photon", _kernels.DARK: "dark", _kernels.CROSSTALK: "crosstalk"}


@dataclass
class EventStream:
    channel: int
    times: np.ndarray
    kinds: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int8))


@dataclass
class ChannelReport:
    channel: int
    photon_counts: int
    dark_counts: int
    crosstalk_counts: int
    latched: bool
    latch_time_ps: int | None
    tagged_counts: int = 0
    configured_flux: float = 0.0
    delivered_flux: float = 0.0

    @property
    def total(self) -> int:
        return self.photon_counts + self.dark_counts + self.crosstalk_counts


@dataclass
class SimReport:
    rows: list[ChannelReport]

    def row(self, channel: int) -> ChannelReport:
        return self.rows[channel]

    @property
    def tagged_total(self) -> int:
        return sum(r.tagged_counts for r in self.rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["channel", "photon_counts", "dark_counts", "crosstalk_counts", "latched",
                    "latch_time_ps", "tagged_counts", "configured_flux_per_s",
                    "delivered_flux_per_s"])
        for r in self.rows:
            w.writerow([r.channel, r.photon_counts, r.dark_counts, r.crosstalk_counts,
                        int(r.latched), "" if r.latch_time_ps is None else r.latch_time_ps,
                        r.tagged_counts, repr(r.configured_flux), repr(r.delivered_flux)])
        return buf.getvalue()


def generate_poisson_arrivals(rate: float, duration: float,
                              rng: np.random.Generator | int | None) -> np.ndarray:
    """Homogeneous Poisson process on [0, duration) from exponential gaps."""
    if rate < 0 or duration <= 0:
        raise ValueError("need rate >= 0 and duration > 0")
    if rate == 0:
        return np.zeros(0)
    rng = np.random.default_rng(rng)
    mean = rate * duration
    chunk = int(mean + 6.0 * np.sqrt(mean) + 16)
    parts = []
    t0 = 0.0
    while True:
        t = t0 + np.cumsum(rng.exponential(1.0 / rate, chunk))
        if t[-1] >= duration:
            parts.append(t[t < duration])
            break
        parts.append(t)
        t0 = t[-1]
        chunk = max(16, chunk // 4)
    return np.concatenate(parts)


def periodic_arrivals(period: float, duration: float, offset: float = 0.0) -> np.ndarray:
    """Deterministic pulsed source: one photon at k*period + offset."""
    n = int(np.ceil((duration - offset) / period))
    t = offset + period * np.arange(max(n, 0))
    return t[t < duration]


def crosstalk_rate(config: ReceiverConfig, target: int) -> float:
    """Summed crosstalk event rate into ``target`` from every other channel's input flux."""
    mat = config.crosstalk_matrix()
    flux = np.array([ch.input_flux for ch in config.channels])
    gain = 10.0 ** (mat[target] / 10.0)
    gain[target] = 0.0
    return float(np.dot(flux, gain))


def crosstalk_arrivals(config: ReceiverConfig, target: int,
                       rng: np.random.Generator | int | None) -> np.ndarray:
    # a superposition of independent Poisson streams is one Poisson stream at the summed rate
    return generate_poisson_arrivals(crosstalk_rate(config, target), config.duration, rng)


def simulate_channel(cfg: ChannelConfig, photons: np.ndarray, darks: np.ndarray,
                     crosstalk: np.ndarray, rng: np.random.Generator | int | None
                     ) -> tuple[EventStream, ChannelReport]:
    """Run the detector dynamics over merged candidate arrivals.

    Photon candidates fire with detection_probability(effective bias) times the
    recovery factor; dark and crosstalk candidates are already count-referred
    and are gated by recovery only.
    """
    rng = np.random.default_rng(rng)
    times = np.concatenate([photons, darks, crosstalk]).astype(float)
    kinds = np.concatenate([
        np.full(len(photons), _kernels.PHOTON, np.int8),
        np.full(len(darks), _kernels.DARK, np.int8),
        np.full(len(crosstalk), _kernels.CROSSTALK, np.int8),
    ])
    order = np.argsort(times, kind="stable")
    times, kinds = times[order], kinds[order]
    uniforms = rng.random(times.size)
    d, r = cfg.detector, cfg.readout
    fired, latched, latch_time = _kernels.run_channel(
        times, kinds, uniforms, d.eta_internal, d.i_mid, d.i_width, d.t_dead, d.t_half,
        d.tau_recovery, d.i_latch, cfg.i_set, r.is_ac_coupled, r.overbias_coeff, r.tau_rc)
    ev_t, ev_k = times[fired], kinds[fired]
    counts = np.bincount(ev_k, minlength=3)
    report = ChannelReport(
        channel=cfg.channel_id,
        photon_counts=int(counts[_kernels.PHOTON]),
        dark_counts=int(counts[_kernels.DARK]),
        crosstalk_counts=int(counts[_kernels.CROSSTALK]),
        latched=bool(latched),
        latch_time_ps=int(round(latch_time * PS)) if latched else None,
        configured_flux=cfg.input_flux,
        delivered_flux=cfg.delivered_flux if cfg.delivered_flux is not None else cfg.input_flux,
    )
    return EventStream(cfg.channel_id, ev_t, ev_k), report


def detector_jitter(cfg: ChannelConfig, times: np.ndarray,
                    rng: np.random.Generator) -> np.ndarray:
    """Gaussian displacement at the set bias; returns integer ps (unsorted)."""
    if times.size == 0:
        return np.zeros(0, np.int64)
    bias = max(cfg.i_set, 1e-9)
    sigma = float(jitter_sigma(cfg.detector, cfg.readout, bias))
    return to_ps(times + rng.normal(0.0, sigma, times.size))


def run_channel_chain(config: ValidatedConfig, index: int, *, xt_rate: float | None = None
                      ) -> tuple[EventStream, ChannelReport, np.ndarray]:
    """Arrivals, dynamics, detector jitter and TCSPC for one channel."""
    ch = config.channels[index]
    seed = config.seed
    photon_rng = substream_rng(seed, index, StreamKind.PHOTON)
    if config.source == "pulsed":
        photons = periodic_arrivals(config.sync_period, config.duration, config.pulse_offset)
        if ch.delivered_flux == 0:
            photons = photons[:0]
    else:
        photons = generate_poisson_arrivals(ch.delivered_flux, config.duration, photon_rng)
    darks = generate_poisson_arrivals(float(dark_rate(ch.detector, ch.i_set)), config.duration,
                                      substream_rng(seed, index, StreamKind.DARK))
    xt_rng = substream_rng(seed, index, StreamKind.CROSSTALK)
    if xt_rate is None:
        xtalk = crosstalk_arrivals(config, index, xt_rng)
    else:
        xtalk = generate_poisson_arrivals(xt_rate, config.duration, xt_rng)
    stream, report = simulate_channel(ch, photons, darks, xtalk, photon_rng)
    jit_rng = substream_rng(seed, index, StreamKind.JITTER)
    jittered = np.sort(detector_jitter(ch, stream.times, jit_rng))
    tagged = apply_tcspc(jittered, ch.readout, jit_rng)
    report.tagged_counts = int(tagged.size)
    return stream, report, tagged


def simulate_receiver(config: ReceiverConfig, workers: int | None = None,
                      return_streams: bool = False):
    """Simulate every channel and merge into one time-sorted TimeTags stream.

    Output is bitwise identical for any ``workers`` value.
    """
    cfg = config if isinstance(config, ValidatedConfig) else validate_config(config)
    indices = range(cfg.n_channels)
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda k: run_channel_chain(cfg, k), indices))
    else:
        results = [run_channel_chain(cfg, k) for k in indices]
    tags = TimeTags.merge({k: res[2] for k, res in enumerate(results)}, cfg.n_channels)
    report = SimReport([res[1] for res in results])
    if return_streams:
        return tags, report, [res[0] for res in results]
    return tags, report


def simulate_single(channel: ChannelConfig, duration: float, seed: int, *,
                    source: str = "cw", sync_period: float = 1e-6,
                    pulse_offset: float = 0.5e-6, crosstalk_rate: float = 0.0):
    """Convenience wrapper: one isolated channel with an explicit crosstalk rate."""
    cfg = validate_config(ReceiverConfig(
        channels=(replace(channel, channel_id=0),), duration=duration, seed=seed,
        source=source, sync_period=sync_period, pulse_offset=pulse_offset))
    return run_channel_chain(cfg, 0, xt_rate=crosstalk_rate)
