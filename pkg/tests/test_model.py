import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from snspd_lab.model import (READOUT_PRESETS, ChannelConfig, ConfigError, Coupling, DetectorModel,
                             ReceiverConfig, StreamKind, default_config, dump_config, load_config,
                             parse_config, substream_seed, validate_config)


def test_default_64_channels_accepted():
    cfg = validate_config(default_config(64))
    assert cfg.n_channels == 64
    assert [c.channel_id for c in cfg.channels] == list(range(64))
    assert all(c.delivered_flux == c.input_flux for c in cfg.channels)


def test_eta_out_of_range_names_channel_and_field():
    cfg = default_config(4)
    bad = replace(cfg.channels[2], detector=replace(DetectorModel(), eta_internal=1.3))
    cfg = replace(cfg, channels=cfg.channels[:2] + (bad,) + cfg.channels[3:])
    with pytest.raises(ConfigError, match=r"channel 2: eta_internal=1\.3"):
        validate_config(cfg)


def test_alignment_device_flux_is_minus_3db():
    cfg = default_config(2)
    ch = replace(cfg.channels[1], is_alignment_device=True)
    out = validate_config(replace(cfg, channels=(cfg.channels[0], ch)))
    assert out.channels[1].delivered_flux == pytest.approx(5.01e5, rel=1e-3)
    assert out.channels[1].delivered_flux == pytest.approx(1e6 * 10 ** -0.3, rel=1e-12)


@pytest.mark.parametrize("field,value", [
    ("t_dead", 0.0), ("tau_recovery", -1e-9), ("i_mid", 1.0), ("t_half", 5e-9)])
def test_detector_invariants(field, value):
    det = replace(DetectorModel(), **{field: value})
    with pytest.raises(ConfigError, match=field):
        validate_config(default_config(1, detector=det))


def test_receiver_invariants():
    with pytest.raises(ConfigError, match="duration"):
        validate_config(replace(default_config(2), duration=0.0))
    with pytest.raises(ConfigError, match="i_set"):
        validate_config(default_config(2, i_set=1.3))
    with pytest.raises(ConfigError, match="input_flux"):
        validate_config(default_config(2, input_flux=-1.0))
    with pytest.raises(ConfigError, match="crosstalk"):
        validate_config(replace(default_config(2), crosstalk_db=((0.0, -10.0), (-60.0, 0.0))))
    with pytest.raises(ConfigError, match="crosstalk"):
        validate_config(replace(default_config(2), crosstalk_db=((0.0,),)))


def test_validation_is_idempotent():
    cfg = default_config(8, is_alignment_device=True)
    once = validate_config(cfg)
    assert validate_config(once) == once
    # flux is scaled from input_flux, never compounded
    assert once.channels[0].delivered_flux == pytest.approx(5.0119e5, rel=1e-4)


def test_crosstalk_matrix_default_and_diagonal():
    mat = default_config(3).crosstalk_matrix()
    assert np.all(np.diag(mat) == 0)
    assert np.all(mat[~np.eye(3, dtype=bool)] == -60.0)


def test_substream_seed_pure_and_distinct():
    assert substream_seed(7, 3, StreamKind.DARK) == substream_seed(7, 3, StreamKind.DARK)
    assert substream_seed(7, 0, StreamKind.PHOTON) != substream_seed(7, 1, StreamKind.PHOTON)
    grid = {substream_seed(2024, ch, kind) for ch in range(64) for kind in StreamKind}
    assert len(grid) == 256


@given(st.integers(0, 2**64 - 1), st.integers(0, 1023))
def test_substream_seed_kinds_differ(master, channel):
    seeds = {substream_seed(master, channel, k) for k in StreamKind}
    assert len(seeds) == 4
    assert all(0 <= s < 2**64 for s in seeds)


def test_ini_round_trip(tmp_path):
    det = replace(DetectorModel(), eta_internal=0.47)
    chans = [ChannelConfig(0, detector=det, readout=READOUT_PRESETS["ZFL"], i_set=0.85),
             ChannelConfig(1, input_flux=0.0, is_alignment_device=True)]
    cfg = ReceiverConfig(channels=tuple(chans), duration=0.25, seed=99,
                         crosstalk_db=((0.0, -55.0), (-55.0, 0.0)))
    text = dump_config(cfg)
    back = parse_config(text)
    assert back == cfg
    path = tmp_path / "rx.ini"
    path.write_text(text)
    assert load_config(path) == cfg


def test_ini_defaults_presets_and_overrides(tmp_path):
    (tmp_path / "xt.csv").write_text("0,-50\n-70,0\n")
    text = """
[receiver]
channels = 2
seed = 5
crosstalk_file = xt.csv

[detector]
eta_internal = 0.5

[readout]
preset = CITLF3_3K

[channel]
i_set = 0.95

[detector.1]
eta_internal = 0.3

[readout.1]
preset = CTA
"""
    path = tmp_path / "rx.ini"
    path.write_text(text)
    cfg = load_config(path)
    assert cfg.seed == 5
    assert cfg.channels[0].detector.eta_internal == 0.5
    assert cfg.channels[1].detector.eta_internal == 0.3
    assert cfg.channels[0].readout.coupling is Coupling.AC_COUPLED
    assert cfg.channels[1].readout == READOUT_PRESETS["CTA"]
    assert all(c.i_set == 0.95 for c in cfg.channels)
    assert cfg.crosstalk_matrix()[1, 0] == -70.0


@pytest.mark.parametrize("text,msg", [
    ("[receiver]\nchannels = 2\n[detector]\nbogus = 1\n", "bogus"),
    ("[receiver]\nchannels = 2\n[channel.5]\ni_set = 0.9\n", r"channel\.5"),
    ("[receiver]\nchannels = 1\n[readout]\npreset = NOPE\n", "NOPE"),
    ("[receiver]\nchannels = 1\n[detector]\ni_mid = abc\n", "i_mid"),
    ("[receiver]\nchannels = 1\n[readout]\ncoupling = DC\n", "coupling"),
])
def test_ini_errors(text, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_config(text)


def test_presets_reproduce_quoted_fwhm():
    # unit-bias chain FWHM of each preset, detector term 7 ps
    expect = {"CTA": 26.0, "CTA2": 24.4, "ZFL": 44.9, "CITLF3_50K": 22.0, "CITLF3_3K": 18.9}
    for name, fwhm_ps in expect.items():
        sig = READOUT_PRESETS[name].sigma_electrical_at_unit_bias
        got = 2 * math.sqrt(2 * math.log(2)) * math.hypot(7e-12, sig) * 1e12
        assert got == pytest.approx(fwhm_ps, abs=1e-9)
