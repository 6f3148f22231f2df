"""Domain types, configuration validation and seeding for the receiver simulator.

All biases are normalized to the reference current at which dark counts reach
10 % of the total count rate at 1e6 photons/s. All times are in seconds unless
a name ends in ``_ps``.
"""

from __future__ import annotations

import configparser
import enum
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))

# 50:50 MMI tap on alignment devices
ALIGNMENT_TAP_DB = -3.0
DEFAULT_CROSSTALK_DB = -60.0
MAX_CROSSTALK_DB = -20.0
MAX_I_SET = 1.2


class ConfigError(ValueError):
    """Raised for an invalid receiver configuration."""


class Coupling(str, enum.Enum):
    AC_COUPLED = "AcCoupled"
    LR_PATH_TO_GROUND = "LrPathToGround"


class StreamKind(enum.IntEnum):
    PHOTON = 0
    DARK = 1
    JITTER = 2
    CROSSTALK = 3


@dataclass(frozen=True)
class DetectorModel:
    eta_internal: float = 0.40
    i_mid: float = 0.80
    i_width: float = 0.05
    # dark rate at unit bias; p(1)*1e6/9 puts the 10 % crossing at i = 1
    dcr_amp: float = 4.4e4
    # steep enough that H > 1e7 near 90 % of the reference bias
    dcr_slope: float = 50.0
    t_dead: float = 10e-9
    t_half: float = 25e-9
    tau_recovery: float = 6e-9
    sigma_intrinsic: float = 7e-12
    # detector-side slew term, added in quadrature to the readout one
    jitter_coeff: float = 0.0
    i_latch: float = 1.05


@dataclass(frozen=True)
class ReadoutModel:
    coupling: Coupling = Coupling.LR_PATH_TO_GROUND
    overbias_coeff: float = 0.02
    tau_rc: float = 1e-6
    sigma_electrical_at_unit_bias: float = 8.5e-12
    tcspc_dead_time: float = 20e-9
    tcspc_sigma: float = 75e-12 / FWHM_PER_SIGMA

    @property
    def is_ac_coupled(self) -> bool:
        return self.coupling is Coupling.AC_COUPLED


def _electrical_sigma(fwhm_total: float, sigma_intrinsic: float = 7e-12) -> float:
    sigma = fwhm_total / FWHM_PER_SIGMA
    return math.sqrt(sigma**2 - sigma_intrinsic**2)


# Amplifier chains, pinned to the minimal jitter at maximal bias for each.
READOUT_PRESETS: dict[str, ReadoutModel] = {
    "CTA": ReadoutModel(sigma_electrical_at_unit_bias=_electrical_sigma(26.0e-12)),
    "CTA2": ReadoutModel(sigma_electrical_at_unit_bias=_electrical_sigma(24.4e-12)),
    "ZFL": ReadoutModel(
        coupling=Coupling.AC_COUPLED,
        sigma_electrical_at_unit_bias=_electrical_sigma(44.9e-12),
    ),
    "CITLF3_50K": ReadoutModel(
        coupling=Coupling.AC_COUPLED,
        sigma_electrical_at_unit_bias=_electrical_sigma(22.0e-12),
    ),
    "CITLF3_3K": ReadoutModel(
        coupling=Coupling.AC_COUPLED,
        sigma_electrical_at_unit_bias=_electrical_sigma(18.9e-12),
    ),
}


@dataclass(frozen=True)
class ChannelConfig:
    channel_id: int
    detector: DetectorModel = field(default_factory=DetectorModel)
    readout: ReadoutModel = field(default_factory=ReadoutModel)
    i_set: float = 0.9
    input_flux: float = 1e6
    is_alignment_device: bool = False
    # filled in by validate_config
    delivered_flux: float | None = None


@dataclass(frozen=True)
class ReceiverConfig:
    channels: tuple[ChannelConfig, ...]
    # N x N in dB; diagonal ignored. None means constant DEFAULT_CROSSTALK_DB.
    crosstalk_db: tuple[tuple[float, ...], ...] | None = None
    duration: float = 1.0
    seed: int = 0
    source: str = "cw"
    sync_period: float = 1e-6
    pulse_offset: float = 0.5e-6

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    def crosstalk_matrix(self) -> np.ndarray:
        n = self.n_channels
        if self.crosstalk_db is None:
            mat = np.full((n, n), DEFAULT_CROSSTALK_DB)
        else:
            mat = np.array(self.crosstalk_db, dtype=float)
        np.fill_diagonal(mat, 0.0)
        return mat


@dataclass(frozen=True)
class ValidatedConfig(ReceiverConfig):
    """A ReceiverConfig whose invariants have been checked."""


def _fail(channel: int | None, name: str, value, why: str):
    where = f"channel {channel}: " if channel is not None else ""
    raise ConfigError(f"{where}{name}={value!r} {why}")


def _check_detector(idx: int, d: DetectorModel) -> None:
    if not 0.0 <= d.eta_internal <= 1.0:
        _fail(idx, "eta_internal", d.eta_internal, "must lie in [0, 1]")
    for name in ("t_dead", "t_half", "tau_recovery", "i_width"):
        if not getattr(d, name) > 0:
            _fail(idx, name, getattr(d, name), "must be > 0")
    if not d.t_half > d.t_dead:
        _fail(idx, "t_half", d.t_half, f"must exceed t_dead={d.t_dead!r}")
    if not d.i_mid < 1.0:
        _fail(idx, "i_mid", d.i_mid, "must be < 1")
    for name in ("dcr_amp", "sigma_intrinsic", "jitter_coeff"):
        if getattr(d, name) < 0:
            _fail(idx, name, getattr(d, name), "must be >= 0")


def _check_readout(idx: int, r: ReadoutModel) -> None:
    for name in ("tcspc_dead_time", "sigma_electrical_at_unit_bias", "tcspc_sigma",
                 "overbias_coeff"):
        if getattr(r, name) < 0:
            _fail(idx, name, getattr(r, name), "must be >= 0")
    if r.is_ac_coupled and not r.tau_rc > 0:
        _fail(idx, "tau_rc", r.tau_rc, "must be > 0 for AC coupling")


def delivered_flux(ch: ChannelConfig) -> float:
    if ch.is_alignment_device:
        return ch.input_flux * 10.0 ** (ALIGNMENT_TAP_DB / 10.0)
    return ch.input_flux


def validate_config(raw: ReceiverConfig) -> ValidatedConfig:
    """Check every invariant and pre-scale alignment-device flux.

    Raises ConfigError naming the first offending channel and field.
    """
    if not raw.duration > 0:
        _fail(None, "duration", raw.duration, "must be > 0")
    if raw.source not in ("cw", "pulsed"):
        _fail(None, "source", raw.source, "must be 'cw' or 'pulsed'")
    if raw.source == "pulsed" and not raw.sync_period > 0:
        _fail(None, "sync_period", raw.sync_period, "must be > 0")
    n = raw.n_channels
    if n == 0:
        raise ConfigError("no channels configured")
    checked = []
    for idx, ch in enumerate(raw.channels):
        if ch.channel_id != idx:
            _fail(idx, "channel_id", ch.channel_id, f"must equal its position {idx}")
        _check_detector(idx, ch.detector)
        _check_readout(idx, ch.readout)
        if not 0.0 <= ch.i_set <= MAX_I_SET:
            _fail(idx, "i_set", ch.i_set, f"must lie in [0, {MAX_I_SET}]")
        if not ch.input_flux >= 0:
            _fail(idx, "input_flux", ch.input_flux, "must be >= 0")
        checked.append(replace(ch, delivered_flux=delivered_flux(ch)))
    xt = raw.crosstalk_db
    if xt is not None:
        mat = np.asarray(xt, dtype=float)
        if mat.shape != (n, n):
            _fail(None, "crosstalk_db", mat.shape, f"must be {n}x{n}")
        off = mat[~np.eye(n, dtype=bool)]
        if off.size and not np.all(off <= MAX_CROSSTALK_DB):
            i, j = np.argwhere((mat > MAX_CROSSTALK_DB) & ~np.eye(n, dtype=bool))[0]
            _fail(int(i), f"crosstalk_db[{i},{j}]", float(mat[i, j]),
                  f"must be <= {MAX_CROSSTALK_DB} dB")
        xt = tuple(tuple(float(v) for v in row) for row in mat)
    return ValidatedConfig(
        channels=tuple(checked),
        crosstalk_db=xt,
        duration=float(raw.duration),
        seed=int(raw.seed) & 0xFFFFFFFFFFFFFFFF,
        source=raw.source,
        sync_period=float(raw.sync_period),
        pulse_offset=float(raw.pulse_offset),
    )


def substream_seed(master_seed: int, channel: int, kind: StreamKind) -> int:
    """Derive an independent 64-bit seed for one (channel, stream kind) pair."""
    ss = np.random.SeedSequence(
        entropy=int(master_seed) & 0xFFFFFFFFFFFFFFFF,
        spawn_key=(int(channel), int(kind)),
    )
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def substream_rng(master_seed: int, channel: int, kind: StreamKind) -> np.random.Generator:
    return np.random.default_rng(substream_seed(master_seed, channel, kind))


def default_config(n_channels: int = 64, **channel_kw) -> ReceiverConfig:
    return ReceiverConfig(
        channels=tuple(ChannelConfig(channel_id=k, **channel_kw) for k in range(n_channels))
    )


# ---------------------------------------------------------------------------
# INI-style configuration files
#
#   [receiver]            channels, duration, seed, source, sync_period,
#                         pulse_offset, crosstalk_db (constant) or
#                         crosstalk_file (CSV matrix, path relative to the file)
#   [detector] [readout] [channel]      defaults for every channel
#   [channel.N] [detector.N] [readout.N] per-channel overrides
#   readout sections may name a preset: preset = CTA
# ---------------------------------------------------------------------------

def _coerce(cls, name: str, text: str):
    valid = {f.name for f in fields(cls)}
    if name not in valid:
        raise ConfigError(f"unknown key {name!r} for {cls.__name__}")
    if name == "coupling":
        try:
            return Coupling(text.strip())
        except ValueError:
            raise ConfigError(f"coupling={text!r} must be AcCoupled or LrPathToGround") from None
    if name == "is_alignment_device":
        return text.strip().lower() in ("1", "true", "yes", "on")
    if name == "channel_id":
        return int(text)
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{name}={text!r} is not a number") from None


def _section_kw(parser: configparser.ConfigParser, name: str, cls) -> dict:
    if not parser.has_section(name):
        return {}
    kw = {}
    for key, text in parser.items(name):
        if key == "preset":
            continue
        kw[key] = _coerce(cls, key, text)
    return kw


def _readout_for(parser, name: str, base: ReadoutModel) -> ReadoutModel:
    if not parser.has_section(name):
        return base
    preset = parser.get(name, "preset", fallback=None)
    if preset is not None:
        if preset not in READOUT_PRESETS:
            raise ConfigError(f"unknown readout preset {preset!r}")
        base = READOUT_PRESETS[preset]
    return replace(base, **_section_kw(parser, name, ReadoutModel))


def parse_config(text: str, base_dir: Path | None = None) -> ReceiverConfig:
    parser = configparser.ConfigParser()
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from None
    rx = parser["receiver"] if parser.has_section("receiver") else {}
    n = int(rx.get("channels", 64))
    det0 = DetectorModel(**_section_kw(parser, "detector", DetectorModel))
    ro0 = _readout_for(parser, "readout", ReadoutModel())
    ch0 = _section_kw(parser, "channel", ChannelConfig)
    ch0.pop("channel_id", None)
    channels = []
    for k in range(n):
        det = replace(det0, **_section_kw(parser, f"detector.{k}", DetectorModel))
        ro = _readout_for(parser, f"readout.{k}", ro0)
        kw = dict(ch0)
        kw.update(_section_kw(parser, f"channel.{k}", ChannelConfig))
        kw.pop("channel_id", None)
        channels.append(ChannelConfig(channel_id=k, detector=det, readout=ro, **kw))
    known = {"receiver", "detector", "readout", "channel"}
    for sec in parser.sections():
        head, _, idx = sec.partition(".")
        if sec in known:
            continue
        if head not in known or not idx.isdigit() or int(idx) >= n:
            raise ConfigError(f"unexpected section [{sec}]")
    crosstalk = None
    if "crosstalk_file" in rx:
        path = Path(rx["crosstalk_file"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        mat = np.loadtxt(path, delimiter=",", ndmin=2)
        crosstalk = tuple(tuple(float(v) for v in row) for row in mat)
    elif "crosstalk_db" in rx:
        value = float(rx["crosstalk_db"])
        crosstalk = tuple(tuple(0.0 if i == j else value for j in range(n)) for i in range(n))
    try:
        return ReceiverConfig(
            channels=tuple(channels),
            crosstalk_db=crosstalk,
            duration=float(rx.get("duration", 1.0)),
            seed=int(rx.get("seed", 0)),
            source=str(rx.get("source", "cw")),
            sync_period=float(rx.get("sync_period", 1e-6)),
            pulse_offset=float(rx.get("pulse_offset", 0.5e-6)),
        )
    except ValueError as exc:
        raise ConfigError(f"[receiver]: {exc}") from None


def load_config(path: str | Path) -> ReceiverConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, base_dir=path.parent)


def _fmt(value) -> str:
    if isinstance(value, enum.Enum):
        return str(value.value)
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value)


def dump_config(cfg: ReceiverConfig) -> str:
    """Serialize a config in the INI layout read by :func:`parse_config`.

    Every channel gets explicit sections, so the output is verbose but exact.
    Non-constant crosstalk matrices are not representable and raise.
    """
    lines = ["[receiver]", f"channels = {cfg.n_channels}", f"duration = {cfg.duration!r}",
             f"seed = {cfg.seed}", f"source = {cfg.source}",
             f"sync_period = {cfg.sync_period!r}", f"pulse_offset = {cfg.pulse_offset!r}"]
    if cfg.crosstalk_db is not None:
        mat = cfg.crosstalk_matrix()
        off = mat[~np.eye(cfg.n_channels, dtype=bool)]
        if off.size and not np.all(off == off[0]):
            raise ConfigError("only constant crosstalk matrices can be dumped inline")
        if off.size:
            lines.append(f"crosstalk_db = {float(off[0])!r}")
    for ch in cfg.channels:
        k = ch.channel_id
        lines += ["", f"[channel.{k}]", f"i_set = {ch.i_set!r}",
                  f"input_flux = {ch.input_flux!r}",
                  f"is_alignment_device = {_fmt(ch.is_alignment_device)}", "",
                  f"[detector.{k}]"]
        lines += [f"{f.name} = {_fmt(getattr(ch.detector, f.name))}" for f in fields(DetectorModel)]
        lines += ["", f"[readout.{k}]"]
        lines += [f"{f.name} = {_fmt(getattr(ch.readout, f.name))}" for f in fields(ReadoutModel)]
    return "\n".join(lines) + "\n"


def with_channels(cfg: ReceiverConfig, channels: Sequence[ChannelConfig]) -> ReceiverConfig:
    return replace(cfg, channels=tuple(channels))
