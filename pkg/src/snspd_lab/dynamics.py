"""Detector response laws: efficiency, dark counts, recovery, over-bias, latching, jitter.

Every function is pure and accepts scalars or numpy arrays for the bias/time argument.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import FWHM_PER_SIGMA, DetectorModel, ReadoutModel


@dataclass
class DetectorState:
    last_fire_time: float | None = None
    latched: bool = False
    effective_bias: float = 0.0


def _logistic(x):
    return 1.0 / (1.0 + np.exp(-x))


def detection_probability(model: DetectorModel, i):
    """Logistic rise of the detection probability towards ``eta_internal``."""
    return model.eta_internal * _logistic((np.asarray(i, dtype=float) - model.i_mid) / model.i_width)


def dark_rate(model: DetectorModel, i):
    """Dark-count rate in events/s; equals ``dcr_amp`` at unit bias."""
    return model.dcr_amp * np.exp(model.dcr_slope * (np.asarray(i, dtype=float) - 1.0))


def recovery_factor(model: DetectorModel, dt):
    """Fraction of the full efficiency available ``dt`` seconds after a detection.

    Zero inside the dead time, then a logistic that passes 0.5 at ``t_half``.
    """
    dt = np.asarray(dt, dtype=float)
    s = _logistic((dt - model.t_half) / model.tau_recovery)
    return np.where(dt < model.t_dead, 0.0, s)


def effective_bias(readout: ReadoutModel, i_set: float, recent_rate):
    """Bias seen by the wire once the coupling capacitor has charged.

    An L-R path to ground pins the bias; AC coupling adds a term proportional
    to the recent count rate.
    """
    if not readout.is_ac_coupled:
        return i_set + 0.0 * np.asarray(recent_rate, dtype=float)
    rate = np.asarray(recent_rate, dtype=float)
    return i_set * (1.0 + readout.overbias_coeff * rate * readout.tau_rc)


def latch_check(model: DetectorModel, i_eff) -> bool:
    return bool(np.all(np.asarray(i_eff) >= model.i_latch))


def jitter_sigma(model: DetectorModel, readout: ReadoutModel, i):
    """Gaussian timing error (s) at bias ``i``: intrinsic floor plus 1/i slew terms."""
    i = np.asarray(i, dtype=float)
    if np.any(i <= 0):
        raise ValueError("jitter_sigma is undefined at zero bias")
    slew = (readout.sigma_electrical_at_unit_bias**2 + model.jitter_coeff**2) / i**2
    return np.sqrt(model.sigma_intrinsic**2 + slew)


def jitter_fwhm(model: DetectorModel, readout: ReadoutModel, i):
    return FWHM_PER_SIGMA * jitter_sigma(model, readout, i)


def integrated_recovery(model: DetectorModel, t):
    """Closed-form integral of :func:`recovery_factor` from 0 to ``t``."""
    t = np.asarray(t, dtype=float)
    tau = model.tau_recovery

    def softplus_int(x):
        return tau * np.logaddexp(0.0, (x - model.t_half) / tau)

    out = softplus_int(np.maximum(t, model.t_dead)) - softplus_int(model.t_dead)
    return np.where(t < model.t_dead, 0.0, out)
