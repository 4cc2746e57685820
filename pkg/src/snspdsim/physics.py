"""Electro-thermal response of the nanowire to sampled optical power.

The detector is a stochastic state machine over four operating phases:

``Superconducting``
    Fully recovered, carrying the full bias current. Single photons and dark
    counts fire a Poisson channel; bright light fires the multiphoton trigger
    channel at its recovered sensitivity.
``HotspotActive``
    A normal domain has just formed; the current is pinned at the reset level
    for a short hold time before the inductive recovery begins.
``Recovering``
    The current climbs back exponentially. Single-photon sensitivity is gone
    until the recovered-current threshold is crossed, but bright pulses can
    re-form a hotspot with a strongly superlinear energy response whose 50%
    point deepens with delay (``sens_e50_table``).
``Latched``
    A self-heating normal domain persists indefinitely at a small, nearly
    voltage-independent current. No photon or dark channels; bright light
    modulates the domain length and hence the current through the load.

Latching is driven by a leaky accumulator of time spent below the recovered
current: sustained suppression beyond ``latch_hold_time`` latches the wire,
while the accumulator drains with ``latch_cool_time`` whenever the detector
sits fully recovered.

Trigger stochastics: a sample of optical energy E seen within the sensitivity
integration window fires with per-pulse probability
``p = (E/e50)^s / (1 + (E/e50)^s)``, converted to a hazard rate so that the
outcome is invariant under resampling. Formation is delayed by a fixed latency
plus a Gaussian jitter whose sigma grows as the instantaneous current drops.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import ndtri

from .params import R_LOAD, BiasSource, DetectorParams
from .waveform import OpticalWaveform

# Event kinds.
HOTSPOT_FORMED = "HotspotFormed"
LATCH_ENTERED = "LatchEntered"
LATCH_EXITED = "LatchExited"
DARK_COUNT = "DarkCount"

# Guard on the simulation step (hazard and filter resolution).
MAX_STEP = 100e-12

_P_CLAMP = 1.0 - 1e-12


class ExtrapolationError(ValueError):
    """Query outside the measured operating range."""


class CalibrationError(ValueError):
    """Anchor set cannot be represented by the sensitivity model."""


@dataclass(frozen=True)
class EventRecord:
    kind: str
    time: float


@dataclass
class ElectricalTrace:
    """Voltage across the 50 ohm load before amplification."""

    dt: float
    v_out: np.ndarray
    events: list = field(default_factory=list)

    def __post_init__(self) -> None:
        self.v_out = np.asarray(self.v_out, dtype=float)
        if not np.all(np.isfinite(self.v_out)):
            raise ValueError("trace voltage must be finite")

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.v_out)) * self.dt


# --------------------------------------------------------------------------
# Detector state union


@dataclass(frozen=True)
class Superconducting:
    heat_load: float = 0.0
    forming: float = 0.0


@dataclass(frozen=True)
class HotspotActive:
    time_remaining: float
    heat_load: float = 0.0


@dataclass(frozen=True)
class Recovering:
    i_now: float
    t_since_reset: float
    heat_load: float = 0.0
    forming: float = 0.0


@dataclass(frozen=True)
class Latched:
    r_latched: float
    v_bias: float
    i_latched: float
    i_thermal: float


DetectorState = object  # union of the four classes above


def make_latched(params: DetectorParams, v_bias: float = 0.1,
                 i_latched: float = None) -> Latched:
    """Construct a latched state at the given bias voltage."""
    if i_latched is None:
        i_latched = params.i_latched_nominal
    return Latched(r_latched=v_bias / i_latched, v_bias=v_bias,
                   i_latched=i_latched, i_thermal=i_latched)


# --------------------------------------------------------------------------
# Sensitivity model


def _sens_arrays(params: DetectorParams):
    tab = params.sens_e50_table
    delays = np.array([row[0] for row in tab])
    log_e50 = np.log(np.array([row[1] for row in tab]))
    slopes = np.array([row[2] for row in tab])
    return delays, log_e50, slopes


def trigger_e50(delay, params: DetectorParams):
    """50% trigger energy at the given delay after reset (clamped to table)."""
    delays, log_e50, _ = _sens_arrays(params)
    return np.exp(np.interp(delay, delays, log_e50))


def trigger_slope(delay, params: DetectorParams):
    delays, _, slopes = _sens_arrays(params)
    return np.interp(delay, delays, slopes)


def hotspot_probability(pulse_energy, delay, params: DetectorParams):
    """Probability that a short trigger pulse re-forms a hotspot.

    Log-logistic in energy around the delay-interpolated 50% point; clamped
    to the table's delay range outside it. Zero energy never triggers.
    """
    e = np.asarray(pulse_energy, dtype=float)
    if np.any(e < 0):
        raise ValueError("pulse_energy must be nonnegative")
    d = np.asarray(delay, dtype=float)
    if np.any(d < 0):
        raise ValueError("delay must be nonnegative")
    e50 = trigger_e50(d, params)
    s = trigger_slope(d, params)
    with np.errstate(divide="ignore", over="ignore"):
        r = np.where(e > 0, e / e50, 0.0) ** s
        p = np.where(np.isfinite(r), r / (1.0 + r), 1.0)
    return p if p.ndim else float(p)


def single_photon_click_probability(params: DetectorParams, mean_photons) -> float:
    """Click probability of a fully recovered detector for a weak pulse."""
    mu = np.asarray(mean_photons, dtype=float)
    if np.any(mu < 0):
        raise ValueError("mean_photons must be nonnegative")
    p = -np.expm1(-params.eta * params.coupling * mu)
    return p if p.ndim else float(p)


def recovery_current(t_since_reset, params: DetectorParams):
    """Bias current during the inductive recovery after a reset."""
    t = np.asarray(t_since_reset, dtype=float)
    if np.any(t < 0):
        raise ValueError("t_since_reset must be nonnegative")
    i = params.i_b * (1.0 - (1.0 - params.f_reset) * np.exp(-t / params.tau_rec))
    return i if i.ndim else float(i)


def trigger_hazard_rate(window_energy, delay, params: DetectorParams):
    """Hotspot formation rate (1/s) for energy seen in the integration window."""
    p = np.minimum(hotspot_probability(window_energy, delay, params), _P_CLAMP)
    return -np.log1p(-p) / params.sens_window


def quiet_time(params: DetectorParams) -> float:
    """Time after reset past which the residual tail is treated as zero."""
    return 2.5 * params.full_recovery_time


# --------------------------------------------------------------------------
# Latched branch


def _latched_slope(v_bias: float, params: DetectorParams) -> float:
    lv = math.log(v_bias)
    lo, hi = math.log(0.1), math.log(10.0)
    x = min(max((lv - lo) / (hi - lo), 0.0), 1.0)
    return math.exp(math.log(params.cw_slope_low_v) * (1 - x)
                    + math.log(params.cw_slope_high_v) * x)


def latched_iv(v_bias: float, optical_power: float, params: DetectorParams,
               i_latched: float = None):
    """Steady latched-state current and device resistance under CW light.

    Returns (I, R) with R = V/I_dark + slope(V) * P. The dark current is the
    stored latched current, independent of the applied voltage.
    """
    if not 0.0 < v_bias <= 10.0:
        raise ExtrapolationError(
            f"v_bias {v_bias} V outside the measured 0-10 V range")
    if optical_power < 0:
        raise ValueError("optical_power must be nonnegative")
    if i_latched is None:
        i_latched = params.i_latched_nominal
    r = v_bias / i_latched + _latched_slope(v_bias, params) * optical_power
    return v_bias / r, r


def latched_steady_current(p_sample, v_bias: float, params: DetectorParams,
                           i_latched: float):
    """Vectorized latched current for the given per-sample optical power."""
    slope = _latched_slope(v_bias, params)
    r = v_bias / i_latched + slope * np.asarray(p_sample, dtype=float)
    return v_bias / r


def latched_pulse_response(waveform: OpticalWaveform, v_bias: float,
                           params: DetectorParams,
                           i_latched: float = None) -> ElectricalTrace:
    """Load voltage of a latched detector driven by an optical waveform.

    The normal-domain length follows the steady-state value of
    :func:`latched_iv` through a first-order thermal lag, so brighter light
    yields a larger positive excursion that saturates as the current
    approaches zero.
    """
    from scipy.signal import lfilter

    if i_latched is None:
        i_latched = params.i_latched_nominal
    i_ss = latched_steady_current(waveform.power, v_bias, params, i_latched)
    a = 1.0 - math.exp(-waveform.dt / params.thermal_tau)
    i_th, _ = lfilter([a], [1.0, a - 1.0], i_ss, zi=[(1.0 - a) * i_latched])
    return ElectricalTrace(waveform.dt, (i_latched - i_th) * R_LOAD, [])


# --------------------------------------------------------------------------
# Scalar state machine step

def _sigma_formation(i_now: float, params: DetectorParams) -> float:
    base = max(i_now, params.i_reset)
    return params.t_jitter_sigma * (params.i_b / base) ** params.t_jitter_exponent


def _formation_delay(i_now: float, u: float, params: DetectorParams) -> float:
    """Latency between trigger and current drop: fixed part plus jitter."""
    sig = _sigma_formation(i_now, params)
    d = sig * ndtri(min(max(u, 1e-12), 1.0 - 1e-12))
    lat = params.t_form_latency
    return lat + min(max(d, -lat), lat)


def step_detector(state, p_sample: float, dt: float, params: DetectorParams,
                  rng: np.random.Generator, *, window_energy: float = None,
                  t_now: float = 0.0):
    """Advance the detector by one sample of optical power.

    Returns (new_state, v_out_sample, events). Consumes exactly two uniforms
    per call. ``window_energy`` overrides the optical energy attributed to
    the sensitivity integration window (defaults to locally constant power);
    ``t_now`` stamps emitted event records.
    """
    if not math.isfinite(p_sample) or p_sample < 0:
        raise ValueError("p_sample must be finite and nonnegative")
    if dt <= 0:
        raise ValueError("dt must be positive")
    if dt > MAX_STEP:
        raise ValueError(f"dt {dt} exceeds the {MAX_STEP} resolution guard")

    u_event, u_aux = rng.random(2)
    events = []

    # Latched branch is absorbing and purely deterministic.
    if isinstance(state, Latched):
        i_ss = latched_steady_current(p_sample, state.v_bias, params,
                                      state.i_latched)
        a = 1.0 - math.exp(-dt / params.thermal_tau)
        i_th = state.i_thermal + (float(i_ss) - state.i_thermal) * a
        v = (state.i_latched - i_th) * R_LOAD
        return replace(state, i_thermal=i_th), v, events

    # Observe current and output voltage.
    hold = isinstance(state, HotspotActive)
    if hold:
        i_now = params.i_reset
        t_reset = None
    elif isinstance(state, Recovering):
        i_now = recovery_current(state.t_since_reset, params)
        t_reset = state.t_since_reset
    else:
        i_now = params.i_b
        t_reset = None
    v_out = (params.i_b - i_now) * R_LOAD

    forming = getattr(state, "forming", 0.0)
    recovered_now = (not hold) and (t_reset is None
                                    or i_now >= params.recovery_threshold_frac * params.i_b)

    # Stochastic trigger channels.
    if not hold and forming <= 0.0:
        if window_energy is None:
            window_energy = p_sample * params.sens_window
        delay = t_reset if t_reset is not None else params.sens_e50_table[-1][0]
        lam_hot = float(trigger_hazard_rate(window_energy, delay, params))
        lam_ph = lam_dark = 0.0
        if recovered_now:
            lam_ph = params.eta * params.coupling * p_sample / params.photon_energy
            lam_dark = params.dark_rate
        lam = lam_hot + lam_ph + lam_dark
        q = -math.expm1(-lam * dt)
        if u_event < q:
            kind = DARK_COUNT if u_event > q * (lam_hot + lam_ph) / lam else HOTSPOT_FORMED
            events.append(EventRecord(kind, t_now))
            forming = _formation_delay(i_now, u_aux, params)
            forming = max(dt, round(forming / dt) * dt)

    # Advance clocks.
    new_hold_t = None
    if forming > 0.0:
        forming -= dt
        if forming <= dt / 2:
            new_hold_t = params.t_hotspot
            forming = 0.0
    if new_hold_t is not None:
        new_state = HotspotActive(new_hold_t, state.heat_load)
    elif hold:
        rem = state.time_remaining - dt
        if rem <= dt / 2:
            new_state = Recovering(params.i_reset, 0.0, state.heat_load)
        else:
            new_state = HotspotActive(rem, state.heat_load)
    elif isinstance(state, Recovering):
        t_new = state.t_since_reset + dt
        if t_new >= quiet_time(params):
            new_state = Superconducting(state.heat_load, forming)
        else:
            new_state = Recovering(recovery_current(t_new, params), t_new,
                                   state.heat_load, forming)
    else:
        new_state = Superconducting(state.heat_load, forming)

    # Thermal accumulator and latch rule (post-advance state).
    if isinstance(new_state, HotspotActive):
        recovered = False
    elif isinstance(new_state, Recovering):
        recovered = new_state.i_now >= params.recovery_threshold_frac * params.i_b
    else:
        recovered = True
    if recovered:
        heat = new_state.heat_load * math.exp(-dt / params.latch_cool_time)
    else:
        heat = new_state.heat_load + dt
    if heat >= params.latch_hold_time:
        i_latched = (params.i_latched_nominal
                     + (2.0 * u_aux - 1.0) * params.i_latched_jitter)
        events.append(EventRecord(LATCH_ENTERED, t_now))
        return make_latched(params, 0.1, i_latched), v_out, events
    new_state = replace(new_state, heat_load=heat)
    return new_state, v_out, events


def reset_latch(state):
    """Cycle the bias below the latched current, restoring normal operation."""
    if isinstance(state, Latched):
        return Superconducting()
    warnings.warn("reset_latch called on a detector that is not latched",
                  stacklevel=2)
    return state


def simulate(params: DetectorParams, bias: BiasSource,
             waveform: OpticalWaveform, seed: int) -> ElectricalTrace:
    """Drive the detector with a waveform; deterministic for a fixed seed."""
    from .montecarlo import simulate_trace
    return simulate_trace(params, bias, waveform, seed)


# --------------------------------------------------------------------------
# Sensitivity calibration


def calibrate_from_anchors(anchors, default_slope: float = 4.0,
                           max_residual: float = 0.05):
    """Fit per-delay (e50, slope) pairs from measured trigger probabilities.

    ``anchors`` is an iterable of (delay_s, energy_J, probability) with at
    least two distinct energies per delay and probabilities strictly inside
    (0, 1). Returns a sens_e50_table-shaped tuple sorted by delay.
    """
    from scipy.optimize import least_squares

    groups: dict = {}
    for delay, energy, prob in anchors:
        if not 0.0 < prob < 1.0:
            raise CalibrationError("anchor probabilities must be in (0, 1)")
        if energy <= 0 or delay <= 0:
            raise CalibrationError("anchor delays and energies must be positive")
        groups.setdefault(float(delay), []).append((float(energy), float(prob)))

    rows = []
    for delay in sorted(groups):
        pts = groups[delay]
        energies = np.array([e for e, _ in pts])
        probs = np.array([p for _, p in pts])
        if np.ptp(energies) <= 1e-9 * float(np.max(energies)):
            raise CalibrationError(
                f"degenerate anchor set at delay {delay}: single energy")

        def resid(x):
            log_e50, slope = x
            r = np.exp(slope * (np.log(energies) - log_e50))
            return r / (1.0 + r) - probs

        # Start from the 0.5-crossing estimated by log-interpolation.
        order = np.argsort(energies)
        x0_log_e50 = float(np.interp(0.0,
                                     np.log(probs[order] / (1 - probs[order])),
                                     np.log(energies[order])))
        fit = least_squares(resid, x0=[x0_log_e50, default_slope],
                            bounds=([-60, 0.05], [0, 60]))
        res = np.abs(resid(fit.x))
        if np.any(res > max_residual):
            raise CalibrationError(
                f"fit residual {res.max():.3f} exceeds {max_residual} at delay {delay}")
        rows.append((delay, float(np.exp(fit.x[0])), float(fit.x[1])))

    e50s = [r[1] for r in rows]
    if any(b >= a for a, b in zip(e50s, e50s[1:])):
        raise CalibrationError("fitted e50 values are not decreasing with delay")
    return tuple(rows)
