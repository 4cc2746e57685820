"""Band-limited RF chain and click discrimination.

The pre-amplifier load voltage passes a first-order high-pass (bias tee /
amplifier low cutoff), a first-order low-pass (amplifier bandwidth), a fixed
voltage gain and the splitter loss to the counter arm. Clicks are maximal
above-threshold intervals that last at least the comparator's minimum dwell;
the click time is the leading-edge crossing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import lfilter

from .physics import ElectricalTrace
from .waveform import OpticalWaveform

# Splitter loss calibrated jointly with the physics scale so the saturated
# latched response sits just above 20 mV while a normal single-photon pulse
# peaks near 50 mV (voltage factor 0.6 to the counter arm).
DEFAULT_SPLITTER_LOSS_DB = 20.0 * math.log10(5.0 / 3.0)


def quantize_threshold(threshold: float, resolution: float = 0.2e-3) -> float:
    """Snap a threshold to the comparator's setting grid."""
    return round(threshold / resolution) * resolution


@dataclass(frozen=True)
class ReadoutParams:
    hp_cutoff: float = 0.1e6
    lp_cutoff: float = 1.5e9
    gain: float = 100.0
    splitter_loss_db: float = DEFAULT_SPLITTER_LOSS_DB
    threshold: float = 10e-3
    min_dwell: float = 3e-9
    threshold_resolution: float = 0.2e-3
    hysteresis: float = 0.0

    def __post_init__(self) -> None:
        if not 0 < self.hp_cutoff < self.lp_cutoff:
            raise ValueError("require 0 < hp_cutoff < lp_cutoff")
        if self.gain <= 0:
            raise ValueError("gain must be positive")
        if self.min_dwell < 0 or self.hysteresis < 0:
            raise ValueError("min_dwell and hysteresis must be nonnegative")
        if self.threshold_resolution <= 0:
            raise ValueError("threshold_resolution must be positive")
        if self.threshold < 0:
            raise ValueError("threshold must be nonnegative")
        q = quantize_threshold(self.threshold, self.threshold_resolution)
        if abs(q - self.threshold) > 1e-6 * self.threshold_resolution:
            raise ValueError(
                f"threshold {self.threshold} is off the "
                f"{self.threshold_resolution} setting grid")

    @property
    def net_voltage_gain(self) -> float:
        return self.gain * 10.0 ** (-self.splitter_loss_db / 20.0)

    @property
    def quantized_threshold(self) -> float:
        return quantize_threshold(self.threshold, self.threshold_resolution)

    def with_threshold(self, threshold: float) -> "ReadoutParams":
        return replace(self, threshold=quantize_threshold(
            threshold, self.threshold_resolution))

    def validate_dt(self, dt: float) -> None:
        if dt > 1.0 / (10.0 * self.lp_cutoff):
            raise ValueError(
                f"dt {dt} too coarse for lp_cutoff {self.lp_cutoff}")


@dataclass(frozen=True)
class ClickEvent:
    t_cross: float
    dwell: float


def amplify(trace: ElectricalTrace, params: ReadoutParams) -> ElectricalTrace:
    """Apply the RF chain: high-pass, low-pass, gain and splitter loss."""
    params.validate_dt(trace.dt)
    x = trace.v_out
    a_hp = 1.0 - math.exp(-trace.dt * 2.0 * math.pi * params.hp_cutoff)
    a_lp = 1.0 - math.exp(-trace.dt * 2.0 * math.pi * params.lp_cutoff)
    base = lfilter([a_hp], [1.0, a_hp - 1.0], x)
    y = lfilter([a_lp], [1.0, a_lp - 1.0], x - base)
    return ElectricalTrace(trace.dt, y * params.net_voltage_gain,
                           list(trace.events))


def discriminate(trace: ElectricalTrace, params: ReadoutParams) -> list:
    """Convert an amplified trace into click events.

    One click per maximal above-threshold interval whose duration reaches
    min_dwell; t_cross is the first sample at or above threshold. With
    nonzero hysteresis the interval releases only below threshold-hysteresis.
    """
    theta = params.quantized_threshold
    v = trace.v_out
    if params.hysteresis > 0:
        above = np.zeros(len(v), dtype=bool)
        high = False
        lo = theta - params.hysteresis
        for k in range(len(v)):
            if high:
                high = v[k] >= lo
            else:
                high = v[k] >= theta
            above[k] = high
    else:
        above = v >= theta
    if not above.any():
        return []
    edges = np.diff(above.astype(np.int8))
    starts = np.flatnonzero(edges == 1) + 1
    ends = np.flatnonzero(edges == -1) + 1
    if above[0]:
        starts = np.concatenate([[0], starts])
    if above[-1]:
        ends = np.concatenate([ends, [len(v)]])
    dwell_n = max(1, int(round(params.min_dwell / trace.dt)))
    clicks = []
    for s, e in zip(starts, ends):
        if e - s >= dwell_n:
            clicks.append(ClickEvent(s * trace.dt, (e - s) * trace.dt))
    return clicks


def _batch_for_state(waveform: OpticalWaveform, state0, threshold: float,
                     n_trials: int, seed: int, params, readout: ReadoutParams,
                     **kwargs):
    from .montecarlo import run_detector_batch
    from .physics import Latched

    rp = readout.with_threshold(threshold)
    latched = isinstance(state0, Latched)
    return run_detector_batch(
        waveform.power, waveform.dt, params, rp,
        n_trials=n_trials, master_seed=seed,
        start_latched=latched,
        i_latched_init=state0.i_latched if latched else None,
        v_bias=state0.v_bias if latched else 0.1,
        **kwargs)


def click_probability(waveform: OpticalWaveform, state0, threshold: float,
                      n_trials: int, seed: int, *, params,
                      readout: ReadoutParams = None):
    """Monte Carlo estimate of P(at least one click) with binomial stderr.

    A latched detector has no stochastic channels, so its trials are
    bit-identical by construction; one simulated trial then stands for all
    of them.
    """
    if n_trials < 100:
        raise ValueError("n_trials must be at least 100")
    if readout is None:
        readout = ReadoutParams()
    from .physics import Latched
    n_run = 1 if isinstance(state0, Latched) else n_trials
    res = _batch_for_state(waveform, state0, threshold, n_run, seed,
                           params, readout)
    hits = int(np.count_nonzero(res.click_counts > 0)) * (n_trials // n_run)
    p = hits / n_trials
    stderr = math.sqrt(max(p * (1.0 - p), 1.0 / n_trials) / n_trials)
    return p, stderr


def click_jitter(waveform: OpticalWaveform, state0, threshold: float,
                 n_trials: int, seed: int, *, params,
                 readout: ReadoutParams = None) -> float:
    """FWHM of the leading-edge crossing time over trials.

    Reported as the Gaussian-equivalent width 2*sqrt(2 ln 2) * std. Raises
    when fewer than half the trials click.
    """
    if readout is None:
        readout = ReadoutParams()
    res = _batch_for_state(waveform, state0, threshold, n_trials, seed,
                           params, readout)
    t = res.first_click[~np.isnan(res.first_click)]
    if len(t) <= n_trials / 2 or len(t) < 2:
        raise ValueError("insufficient clicks to estimate jitter")
    return float(2.0 * math.sqrt(2.0 * math.log(2.0)) * np.std(t))
