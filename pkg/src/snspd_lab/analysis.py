"""Characterization metrics and uncertainty formulas.

Rates are events/s, fluxes photons/s, times seconds, powers W.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import optimize

from .dynamics import integrated_recovery, recovery_factor
from .model import FWHM_PER_SIGMA, ChannelConfig, DetectorModel
from .tcspc import PS, Histogram

PLANCK = 6.62607015e-34
LIGHT_SPEED = 299_792_458.0
TELECOM_WAVELENGTH = 1550e-9

# flux-chain contributions to the efficiency uncertainty (relative)
U_COUNT_RATE = 0.007
U_LASER_STABILITY = 0.003
U_POWER_METER = 0.05
U_ATTENUATOR_TERMS = (0.004, 0.031)


class AnalysisError(ValueError):
    pass


class FwhmAmbiguityError(AnalysisError):
    def __init__(self, crossings):
        self.crossings = list(crossings)
        super().__init__(
            f"expected 2 half-maximum crossings, found {len(self.crossings)} at "
            f"{[round(c, 3) for c in self.crossings]} ps")


def system_detection_efficiency(cr: float, dcr: float, flux: float) -> float:
    if flux <= 0:
        raise AnalysisError("flux must be positive")
    if cr < dcr:
        raise AnalysisError(f"count rate {cr} below dark count rate {dcr}")
    return (cr - dcr) / flux


@dataclass
class BiasSweep:
    bias: np.ndarray
    count_rate: np.ndarray
    dark_rate: np.ndarray

    def __post_init__(self):
        self.bias = np.asarray(self.bias, dtype=float)
        self.count_rate = np.asarray(self.count_rate, dtype=float)
        self.dark_rate = np.asarray(self.dark_rate, dtype=float)
        if not (self.bias.shape == self.count_rate.shape == self.dark_rate.shape):
            raise AnalysisError("sweep columns differ in length")
        if np.any(np.diff(self.bias) <= 0):
            raise AnalysisError("bias values must be strictly increasing")


def normalize_bias(sweep: BiasSweep, flux: float = 1e6, fraction: float = 0.10) -> float:
    """Bias at which the dark rate first reaches ``fraction`` of the total count rate.

    Linear interpolation between the two bracketing sweep points. ``flux`` is
    the illumination the count rates were taken at; it only enters the error
    message.
    """
    h = sweep.dark_rate - fraction * sweep.count_rate
    above = h >= 0
    if not above.any() or above.all():
        raise AnalysisError(
            f"no crossing: dark rate never crosses {fraction:.0%} of the count rate "
            f"at {flux:.3g} photons/s within bias [{sweep.bias[0]}, {sweep.bias[-1]}]")
    j = int(np.argmax(above))
    if j == 0:
        raise AnalysisError("no crossing: sweep starts above the reference level")
    x0, x1 = sweep.bias[j - 1], sweep.bias[j]
    h0, h1 = h[j - 1], h[j]
    return float(x0 + (0.0 - h0) * (x1 - x0) / (h1 - h0))


def photon_energy(wavelength: float = TELECOM_WAVELENGTH) -> float:
    return PLANCK * LIGHT_SPEED / wavelength


def nep(eta: float, dcr: float, wavelength: float = TELECOM_WAVELENGTH) -> float:
    """Noise-equivalent power, (h c / lambda) / eta * sqrt(2 dcr), in W/sqrt(Hz)."""
    if eta <= 0:
        raise AnalysisError("NEP needs eta > 0")
    return photon_energy(wavelength) / eta * math.sqrt(2.0 * dcr)


def figure_of_merit(eta: float, dcr: float, jitter_fwhm: float) -> float:
    if dcr <= 0 or jitter_fwhm <= 0:
        raise AnalysisError("figure of merit needs dcr > 0 and jitter > 0")
    return eta / (dcr * jitter_fwhm)


def _crossings(centers: np.ndarray, counts: np.ndarray, level: float) -> list[float]:
    above = counts >= level
    out = []
    for j in np.flatnonzero(above[1:] != above[:-1]):
        c0, c1 = counts[j], counts[j + 1]
        out.append(float(centers[j] + (level - c0) / (c1 - c0) * (centers[j + 1] - centers[j])))
    return out


def _gauss_fwhm(centers: np.ndarray, counts: np.ndarray) -> float:
    if counts.sum() <= 0:
        raise AnalysisError("empty histogram")
    width = float(centers[1] - centers[0]) if centers.size > 1 else 1.0
    peak = int(np.argmax(counts))
    mu = float(centers[peak])
    sd = max(np.count_nonzero(counts >= counts[peak] / 2.0) * width / FWHM_PER_SIGMA, width)
    # fit only the neighbourhood of the peak, so a flat background far away does not matter
    near = np.abs(centers - mu) <= 6.0 * sd + width
    x, y = centers[near] - mu, counts[near]

    def g(x, a, m, s, b):
        return a * np.exp(-0.5 * ((x - m) / s) ** 2) + b

    try:
        popt, _ = optimize.curve_fit(g, x, y, p0=(y.max(), 0.0, sd, 0.0), maxfev=5000)
    except (RuntimeError, ValueError) as exc:
        raise AnalysisError(f"Gaussian fit failed: {exc}") from None
    return FWHM_PER_SIGMA * abs(popt[2])


def fwhm(hist: Histogram, method: str = "interp") -> float:
    """Full width at half maximum of a histogram, in seconds.

    ``interp`` locates the half-maximum crossings by linear interpolation on
    both flanks and raises FwhmAmbiguityError unless there are exactly two.
    ``gauss`` fits a Gaussian instead.
    """
    counts = hist.counts.astype(float)
    if counts.size == 0 or counts.max() <= 0:
        raise AnalysisError("empty histogram")
    centers = hist.bin_centers_ps.astype(float)
    if method == "gauss":
        return _gauss_fwhm(centers, counts) / PS
    if method != "interp":
        raise ValueError(f"unknown FWHM method {method!r}")
    xs = _crossings(centers, counts, counts.max() / 2.0)
    if len(xs) != 2:
        raise FwhmAmbiguityError(xs)
    return (xs[1] - xs[0]) / PS


def cumulative_crosstalk(per_channel_db: Sequence[float]) -> float:
    x = np.asarray(per_channel_db, dtype=float)
    if x.size == 0:
        raise AnalysisError("need at least one crosstalk value")
    return float(10.0 * np.log10(np.sum(10.0 ** (x / 10.0))))


def root_sum_square(*terms: float) -> float:
    return math.sqrt(sum(t * t for t in terms))


def efficiency_uncertainty(u_cr_rel: float, u_ls_rel: float, u_pm_rel: float,
                           u_al_rel: float) -> float:
    """Relative efficiency uncertainty: count-rate term plus the flux chain in quadrature."""
    if min(u_cr_rel, u_ls_rel, u_pm_rel, u_al_rel) < 0:
        raise AnalysisError("uncertainties must be non-negative")
    return u_cr_rel + root_sum_square(u_ls_rel, u_pm_rel, u_al_rel)


def de_variation(delta_c: float, delta_fac: float, delta_fco: float) -> float:
    """Expected relative efficiency spread from coupler, fiber-array and offset spreads."""
    if min(delta_c, delta_fac, delta_fco) < 0:
        raise AnalysisError("deviations must be non-negative")
    return root_sum_square(delta_c, delta_fac, delta_fco)


def expected_rate(flux: float, eta: float, tau_dead: float, dcr: float = 0.0) -> float:
    """Non-paralyzable dead-time prediction r / (1 + r tau), r = flux*eta + dcr."""
    if tau_dead < 0:
        raise AnalysisError("dead time must be non-negative")
    r = flux * eta + dcr
    if math.isinf(r):
        return 1.0 / tau_dead if tau_dead > 0 else math.inf
    return r / (1.0 + r * tau_dead)


# ---------------------------------------------------------------------------
# Renewal model of a recovering detector followed by a non-paralyzable stage.
#
# Between detections candidate events arrive at `hazard` per second and are
# accepted with recovery_factor(t), so the gap after a detection has survival
# exp(-hazard * R(t)) with R the integrated recovery. The TCSPC stage keeps the
# first detection at least `dead` after the last kept one; kept events are
# renewal points of the detector, which gives the mean kept gap exactly.


def _survival_grid(model: DetectorModel, hazard: float, step: float):
    t_end = model.t_half + 40.0 * model.tau_recovery
    grid = np.arange(0.0, t_end + step, step)
    surv = np.exp(-hazard * integrated_recovery(model, grid))
    # integral of survival from 0 to each grid point
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (surv[1:] + surv[:-1]) * step)])
    tail = surv[-1] / hazard
    return grid, surv, cum, tail


def renewal_count_rate(model: DetectorModel, hazard: float, dead: float = 0.0,
                       step: float = 1e-11) -> float:
    """Mean registered rate for a detector with recovery, behind a dead-time stage."""
    if hazard <= 0:
        return 0.0
    grid, surv, cum, tail = _survival_grid(model, hazard, step)
    total = cum[-1] + tail

    def tail_mean(a):
        # integral of survival from a to infinity
        return total - np.interp(a, grid, cum)

    if dead <= model.t_dead:
        return 1.0 / float(tail_mean(0.0))
    n = int(np.ceil(dead / step))
    x = np.arange(n + 1) * (dead / n)
    h = dead / n
    surv_x = np.interp(x, grid, surv)
    dens = hazard * recovery_factor(model, x) * surv_x
    u = dens.copy()
    for j in range(1, n + 1):
        u[j] = dens[j] + h * np.dot(dens[1:j], u[j - 1:0:-1])
    rem = dead - x
    inner = dead * np.interp(rem, grid, surv) + tail_mean(rem)
    mean_gap = dead * np.interp(dead, grid, surv) + tail_mean(dead) + np.trapezoid(u * inner, x)
    return 1.0 / float(mean_gap)


def invert_renewal_rate(model: DetectorModel, measured_rate: float, dead: float = 0.0) -> float:
    """Hazard (fully-recovered event rate) that yields ``measured_rate``."""
    if measured_rate <= 0:
        return 0.0
    lo = measured_rate
    hi = 2.0 * measured_rate
    while renewal_count_rate(model, hi, dead) < measured_rate:
        hi *= 2.0
        if hi > 1e13:
            raise AnalysisError(f"rate {measured_rate:.4g}/s exceeds the saturation limit")
    return float(optimize.brentq(lambda lam: renewal_count_rate(model, lam, dead) - measured_rate,
                                 lo, hi, xtol=1e-9 * measured_rate, rtol=1e-12))


def recovery_corrected_sde(cr: float, dcr: float, flux: float, model: DetectorModel,
                           dead: float = 0.0) -> float:
    """Efficiency with detector recovery and TCSPC dead-time losses undone.

    Valid for readouts without over-bias (L-R path or negligible rates).
    """
    lam_light = invert_renewal_rate(model, cr, dead)
    lam_dark = invert_renewal_rate(model, dcr, dead)
    return system_detection_efficiency(lam_light, lam_dark, flux)


# ---------------------------------------------------------------------------


@dataclass
class RateCurve:
    flux: np.ndarray
    rate: np.ndarray
    latched: np.ndarray
    latch_time: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def peak_rate(self) -> float:
        ok = ~self.latched
        return float(self.rate[ok].max()) if ok.any() else 0.0

    @property
    def latch_flux(self) -> float:
        """Lowest flux that latched, inf if none did."""
        return float(self.flux[self.latched].min()) if self.latched.any() else math.inf

    def to_csv(self) -> str:
        lines = ["flux_photons_per_s,count_rate_per_s,latched"]
        lines += [f"{f!r},{r!r},{int(l)}" for f, r, l in
                  zip(self.flux.tolist(), self.rate.tolist(), self.latched.tolist())]
        return "\n".join(lines) + "\n"


def default_flux_grid() -> np.ndarray:
    return np.logspace(5, 9.5, 19)


def max_sustained_rate(channel: ChannelConfig, flux_grid: Sequence[float] | None = None,
                       duration: float = 1e-4, seed: int = 0) -> RateCurve:
    """Registered rate vs input flux, with latch flags, for one isolated channel."""
    from .sim import simulate_single

    grid = np.asarray(default_flux_grid() if flux_grid is None else flux_grid, dtype=float)
    rates, latched, when = [], [], []
    for k, flux in enumerate(grid):
        sub = int(np.random.SeedSequence([seed, k]).generate_state(1, np.uint64)[0])
        _, rep, tagged = simulate_single(replace(channel, input_flux=float(flux)), duration, sub)
        rates.append(tagged.size / duration)
        latched.append(rep.latched)
        when.append(np.nan if rep.latch_time_ps is None else rep.latch_time_ps / PS)
    return RateCurve(grid, np.array(rates), np.array(latched, dtype=bool), np.array(when))


def crosstalk_db(victim_rate: float, victim_dcr: float, source_flux_total: float) -> float:
    """Per-source crosstalk, dB of registered excess counts relative to source flux."""
    excess = victim_rate - victim_dcr
    if source_flux_total <= 0:
        raise AnalysisError("no illuminated source channels")
    if excess <= 0:
        return -math.inf
    return 10.0 * math.log10(excess / source_flux_total)


# ---------------------------------------------------------------------------


@dataclass
class MetricReport:
    channel: int
    is_alignment_device: bool
    bias_reference: float
    sde: float
    sde_uncertainty: float
    dcr: float
    nep: float
    operating_bias: float
    jitter_fwhm: float
    h: float
    max_count_rate: float = math.nan

    CSV_HEADER = ("channel,is_alignment_device,bias_reference,sde,sde_uncertainty,dcr_per_s,"
                  "nep_w_per_rthz,operating_bias_norm,jitter_fwhm_ps,h,max_count_rate_per_s")

    def csv_row(self) -> str:
        vals = [self.channel, int(self.is_alignment_device), self.bias_reference, self.sde,
                self.sde_uncertainty, self.dcr, self.nep, self.operating_bias,
                self.jitter_fwhm * PS, self.h, self.max_count_rate]
        return ",".join(str(v) if isinstance(v, int) else repr(float(v)) for v in vals)


def min_nep_index(bias: np.ndarray, nep_values: np.ndarray) -> int:
    """Index of the minimal finite NEP, ties going to the lower bias."""
    nep_values = np.asarray(nep_values, dtype=float)
    finite = np.isfinite(nep_values)
    if not finite.any():
        raise AnalysisError("no bias point with a resolvable NEP")
    best = np.min(nep_values[finite])
    candidates = np.flatnonzero(finite & (nep_values == best))
    return int(candidates[np.argmin(np.asarray(bias)[candidates])])


def sweep_metrics(channel: int, sweep: BiasSweep, flux: float, *,
                  jitter_fwhm_s: Sequence[float] | None = None,
                  light_counts: Sequence[float] | None = None,
                  dark_counts: Sequence[float] | None = None,
                  min_dark_counts: int = 10, is_alignment_device: bool = False,
                  wavelength: float = TELECOM_WAVELENGTH) -> MetricReport:
    """Reduce one channel's bias sweep to a MetricReport.

    SDE is the plateau (maximum over the sweep). The operating point is the
    minimal-NEP bias among points whose dark rate rests on at least
    ``min_dark_counts`` counts. H is the maximum over those same points.
    """
    i_ref = normalize_bias(sweep, flux)
    sde = np.clip((sweep.count_rate - sweep.dark_rate) / flux, 0.0, None)
    k_plateau = int(np.argmax(sde))
    if light_counts is not None and light_counts[k_plateau] > 0:
        u_cr = 1.0 / math.sqrt(light_counts[k_plateau])
    else:
        u_cr = U_COUNT_RATE
    u_rel = efficiency_uncertainty(u_cr, U_LASER_STABILITY, U_POWER_METER,
                                   root_sum_square(*U_ATTENUATOR_TERMS))
    resolved = sde > 0
    if dark_counts is not None:
        resolved &= np.asarray(dark_counts) >= min_dark_counts
    else:
        resolved &= sweep.dark_rate > 0
    nep_values = np.full(sde.shape, np.inf)
    for k in np.flatnonzero(resolved):
        nep_values[k] = nep(sde[k], sweep.dark_rate[k], wavelength)
    k_op = min_nep_index(sweep.bias, nep_values)
    jit = None if jitter_fwhm_s is None else np.asarray(jitter_fwhm_s, dtype=float)
    if jit is not None and np.isfinite(jit).any():
        jitter_min = float(np.nanmin(jit))
        h_values = [figure_of_merit(sde[k], sweep.dark_rate[k], jit[k])
                    for k in np.flatnonzero(resolved) if np.isfinite(jit[k])]
        h_max = max(h_values) if h_values else math.nan
    else:
        jitter_min, h_max = math.nan, math.nan
    return MetricReport(
        channel=channel,
        is_alignment_device=is_alignment_device,
        bias_reference=i_ref,
        sde=float(sde[k_plateau]),
        sde_uncertainty=float(sde[k_plateau] * u_rel),
        dcr=float(sweep.dark_rate[k_op]),
        nep=float(nep_values[k_op]),
        operating_bias=float(sweep.bias[k_op] / i_ref),
        jitter_fwhm=jitter_min,
        h=h_max,
    )
