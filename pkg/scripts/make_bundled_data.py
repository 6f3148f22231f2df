"""Regenerate configs/receiver64.ini and data/survey_176.csv.

The receiver config spreads the internal efficiency across channels and marks
four corner channels as alignment devices (3 dB tap). Everything is seeded, so
running this again gives identical files.
"""

from __future__ import annotations

import argparse
from dataclasses import replace
from pathlib import Path

import numpy as np

from snspd_lab.model import ChannelConfig, DetectorModel, ReceiverConfig, dump_config
from snspd_lab.planner import survey_to_csv, synthetic_survey

ALIGNMENT_CHANNELS = (0, 7, 56, 63)


def receiver64(seed: int = 2024) -> ReceiverConfig:
    rng = np.random.default_rng(seed)
    channels = []
    for k in range(64):
        align = k in ALIGNMENT_CHANNELS
        eta = rng.uniform(0.42, 0.56) if not align else rng.uniform(0.42, 0.50)
        det = replace(DetectorModel(), eta_internal=round(float(eta), 4),
                      i_mid=round(float(rng.normal(0.80, 0.01)), 4))
        channels.append(ChannelConfig(channel_id=k, detector=det, i_set=0.9,
                                      input_flux=1e6, is_alignment_device=align))
    return ReceiverConfig(channels=tuple(channels), duration=1.0, seed=0)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--root", default=Path(__file__).resolve().parents[1], type=Path)
    args = ap.parse_args()
    (args.root / "configs").mkdir(exist_ok=True)
    (args.root / "data").mkdir(exist_ok=True)
    (args.root / "configs" / "receiver64.ini").write_text(dump_config(receiver64()))
    (args.root / "data" / "survey_176.csv").write_text(survey_to_csv(synthetic_survey(176, 0)))


if __name__ == "__main__":
    main()
