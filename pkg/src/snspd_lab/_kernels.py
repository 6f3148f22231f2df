"""Sequential inner loops compiled with numba."""

import math

import numpy as np
from numba import njit

PHOTON, DARK, CROSSTALK = 0, 1, 2


@njit(cache=True, nogil=True)
def run_channel(times, kinds, uniforms, eta, i_mid, i_width, t_dead, t_half, tau_rec,
                i_latch, i_set, ac_coupled, overbias, tau_rc):
    """Thin merged candidate arrivals through recovery, over-bias and latching.

    Returns (fired mask, latched flag, latch time or -1).
    """
    n = times.shape[0]
    fired = np.zeros(n, dtype=np.bool_)
    latched = i_set >= i_latch
    latch_time = 0.0 if latched else -1.0
    if latched:
        return fired, latched, latch_time
    have_last = False
    last = 0.0
    rate = 0.0
    t_rate = 0.0
    p_set = eta / (1.0 + math.exp(-(i_set - i_mid) / i_width))
    for j in range(n):
        t = times[j]
        if have_last:
            dt = t - last
            if dt < t_dead:
                continue
            s = 1.0 / (1.0 + math.exp(-(dt - t_half) / tau_rec))
        else:
            s = 1.0
        if kinds[j] == PHOTON:
            if ac_coupled:
                r = rate * math.exp(-(t - t_rate) / tau_rc)
                i_eff = i_set * (1.0 + overbias * r * tau_rc)
                p = eta / (1.0 + math.exp(-(i_eff - i_mid) / i_width))
            else:
                p = p_set
            prob = p * s
        else:
            prob = s
        if uniforms[j] < prob:
            fired[j] = True
            have_last = True
            last = t
            if ac_coupled:
                rate = rate * math.exp(-(t - t_rate) / tau_rc) + 1.0 / tau_rc
                t_rate = t
                i_eff = i_set * (1.0 + overbias * rate * tau_rc)
                if i_eff >= i_latch:
                    latched = True
                    latch_time = t
                    break
    return fired, latched, latch_time


@njit(cache=True, nogil=True)
def nonparalyzable_mask(times, dead):
    """Keep an event iff it is at least ``dead`` after the last kept event."""
    n = times.shape[0]
    keep = np.zeros(n, dtype=np.bool_)
    if n == 0:
        return keep
    keep[0] = True
    last = times[0]
    for j in range(1, n):
        if times[j] - last >= dead:
            keep[j] = True
            last = times[j]
    return keep
