"""Eavesdropper waveform synthesis and control-fidelity evaluation.

Two control strategies are implemented:

* **Latched-state control**: drive the detector into its latched state once,
  then send bright trigger pulses. Because the latched electrical response
  saturates, a comparator threshold inside the working window separates a
  full-power trigger (click) from the same trigger split to both detectors
  (-3 dB, no click).

* **Deadtime-extension control**: keep both detectors of an interferometric
  receiver busy with a long equal-split pulse, then hold the non-target
  detector above threshold with short steered pulses while the target
  recovers, and finally fire a readout pulse that clicks only the recovered
  target. Steering fidelity is limited by the interferometer extinction
  ratio; leaked steering energy hitting the recovering target is what causes
  clicks at wrong times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .interferometer import (BOTH, D0, D1, ROUTE_PHASE, InterferometerParams,
                             interferometer_split, other_detector)
from .montecarlo import run_detector_batch, trial_generator
from .params import R_LOAD, DetectorParams
from .physics import (latched_pulse_response, latched_steady_current, quiet_time,
                      trigger_e50, trigger_hazard_rate)
from .readout import ReadoutParams, amplify
from .waveform import OpticalWaveform, rectangle_waveform

MAX_CONTROL_DURATION = 500e-9

_FWHM = 2.0 * math.sqrt(2.0 * math.log(2.0))


class InfeasibleAttackError(RuntimeError):
    """The requested control diagram cannot meet its fidelity budget."""


def wilson_upper(successes: int, trials: int, z: float = 1.96) -> float:
    """Upper Wilson score bound for a binomial proportion."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    p = successes / trials
    denom = 1.0 + z * z / trials
    center = p + z * z / (2.0 * trials)
    half = z * math.sqrt(p * (1.0 - p) / trials + z * z / (4.0 * trials * trials))
    return min(1.0, (center + half) / denom)


def _binom_err(p: float, n: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 1.0 / n) / n)


# --------------------------------------------------------------------------
# Control diagram


@dataclass(frozen=True)
class ControlDiagram:
    """One repetition of Eve's optical output for deadtime-extension control.

    Times of the steering/readout pulses are relative to the end of the long
    pulse. Energies are at Eve's output (before insertion loss). Steering
    pulses are routed to the non-target detector; the readout pulse is split
    equally so it clicks whichever detector has recovered.
    """

    target: str
    long_power: float = 2e-3
    long_duration: float = 53e-9
    phase_step: float = math.pi / 2.0
    steering: tuple = ()            # ((energy_J, time_s), ...)
    readout_energy: float = 0.0
    readout_time: float = 0.0
    readout_split: str = BOTH
    repeat_count: int = 1
    tail: float = 20e-9

    def __post_init__(self) -> None:
        if self.target not in (D0, D1):
            raise ValueError("target must be D0 or D1")
        if self.long_power < 0 or self.long_duration <= 0:
            raise ValueError("long pulse must have nonnegative power, positive duration")
        times = [t for _, t in self.steering]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("steering pulse times must be strictly increasing")
        if any(e < 0 for e, _ in self.steering):
            raise ValueError("steering energies must be nonnegative")
        if self.readout_energy < 0:
            raise ValueError("readout energy must be nonnegative")
        if self.repeat_count < 1:
            raise ValueError("repeat_count must be at least 1")
        if self.total_duration > MAX_CONTROL_DURATION:
            raise InfeasibleAttackError(
                f"control diagram of {self.total_duration * 1e9:.0f} ns exceeds "
                f"the {MAX_CONTROL_DURATION * 1e9:.0f} ns low-frequency limit")

    @property
    def rep_period(self) -> float:
        return self.long_duration + self.readout_time + self.tail

    @property
    def total_duration(self) -> float:
        return self.repeat_count * self.rep_period

    @property
    def hold_detector(self) -> str:
        return other_detector(self.target)

    @property
    def short_pulses(self) -> list:
        """All sub-sample pulses of one repetition as (energy, time, route)."""
        pulses = [(e, t, self.hold_detector) for e, t in self.steering]
        pulses.append((self.readout_energy, self.readout_time, self.readout_split))
        return pulses

    def segments(self) -> list:
        """(t_start, duration, power, phase, label) rows for serialization."""
        rows = []
        for r in range(self.repeat_count):
            t0 = r * self.rep_period
            rows.append((t0, self.long_duration, self.long_power,
                         self.phase_step, "long"))
            t_end = t0 + self.long_duration
            for e, t in self.steering:
                rows.append((t_end + t, 0.0, e, ROUTE_PHASE[self.hold_detector],
                             "steer"))
            rows.append((t_end + self.readout_time, 0.0, self.readout_energy,
                         ROUTE_PHASE[self.readout_split], "readout"))
        return rows

    def render(self, dt: float, iface: InterferometerParams,
               observe_pad: float = 45e-9) -> OpticalWaveform:
        """Materialize Eve's output waveform on the sample grid."""
        m = iface.delay_samples(dt)
        n_pre = m
        n_rep = int(round(self.rep_period / dt))
        n_long = int(round(self.long_duration / dt))
        n = n_pre + self.repeat_count * n_rep + int(round(observe_pad / dt))
        power = np.zeros(n)
        phase = np.zeros(n)
        for r in range(self.repeat_count):
            k0 = n_pre + r * n_rep
            power[k0:k0 + n_long] = self.long_power
            # Alternating phase steps every arm delay: every sample of the
            # long pulse differs by +-phase_step from the sample one delay
            # earlier, so its power splits equally between the detectors.
            for c in range(0, n_long, m):
                if (c // m) % 2 == 0:
                    phase[k0 + c:k0 + min(c + m, n_long)] = self.phase_step
            k_end = k0 + n_long
            for e, t, route in self.short_pulses:
                k = k_end + int(round(t / dt))
                power[k] += e / dt
                phase[k] = phase[k - m] + ROUTE_PHASE[route]
        return OpticalWaveform(dt, power, phase)

    def windows(self, initial_span: float = 10e-9,
                readout_before: float = 2e-9,
                readout_after: float = 3e-9):
        """Per-repetition (initial, readout) click windows, preamble-relative.

        Returns (initial_windows, readout_windows) lists of (start_s, end_s).
        """
        init, read = [], []
        for r in range(self.repeat_count):
            t0 = r * self.rep_period
            init.append((t0, t0 + initial_span))
            tr = t0 + self.long_duration + self.readout_time
            read.append((tr - readout_before, tr + readout_after))
        return init, read


@dataclass(frozen=True)
class AttackReport:
    p_click_target: float
    p_click_target_stderr: float
    p_click_wrong: float
    p_click_wrong_stderr: float
    p_click_wrong_upper95: float
    double_click_rate: float
    double_click_stderr: float
    jitter_fwhm: float
    latch_events: int
    trials: int
    sufficient_stats: bool


# --------------------------------------------------------------------------
# Deadtime-extension builder


def build_deadtime_control_diagram(
    target: str,
    iface: InterferometerParams,
    detector: DetectorParams,
    readout: ReadoutParams,
    *,
    threshold: float = None,
    long_power: float = 2e-3,
    long_duration: float = 53e-9,
    steer_start: float = 3e-9,
    steer_period: float = 9e-9,
    steer_boost: float = None,
    readout_boost: float = 4.0,
    readout_margin: float = 2.5e-9,
    tail: float = 20e-9,
    repeat_count: int = 1,
    max_wrong_probability: float = 0.02,
) -> ControlDiagram:
    """Construct a deadtime-extension diagram tuned to the receiver.

    The non-target detector is re-triggered often enough that its comparator
    input never falls below threshold before the readout fires (with
    three-deep redundancy against missed steering pulses), while steering
    energies track the hold detector's recovering sensitivity to keep the
    extinction-ratio leakage into the target below the wrong-click budget.
    Raises InfeasibleAttackError when no schedule meets the budget or the
    chained diagram exceeds the low-frequency-cutoff duration limit.
    """
    rp = readout if threshold is None else readout.with_threshold(threshold)
    theta = rp.quantized_threshold
    v_plateau = (1.0 - detector.f_reset) * detector.i_b * R_LOAD * rp.net_voltage_gain
    if theta >= v_plateau:
        raise InfeasibleAttackError(
            f"threshold {theta} V is above the hotspot plateau {v_plateau:.4f} V; "
            "the hold detector cannot be kept above threshold")
    if theta <= 0:
        raise InfeasibleAttackError("threshold must be positive for control")
    t_fall = detector.tau_rec * math.log(v_plateau / theta)
    d_read = t_fall + readout_margin

    # Steering schedule: cover the hold window until just past the readout,
    # with at least three pulses able to cover the readout instant.
    period = min(steer_period, (d_read - 1e-9 - steer_start) / 2.0)
    if period <= 0:
        raise InfeasibleAttackError(
            "readout is too early to fit a redundant steering schedule")
    times = []
    t = steer_start
    while t < d_read - 0.5e-9:
        times.append(t)
        t += period
    if len(times) < 3 or times[-3] + t_fall < d_read + 0.5e-9:
        raise InfeasibleAttackError(
            "cannot schedule three redundant steering pulses before the readout")

    x = iface.extinction_fraction
    loss = iface.transmission
    gaps = [b - a for a, b in zip([0.0] + times[:-1], times)]
    e50_gap = [float(trigger_e50(g, detector)) for g in gaps]

    from .physics import hotspot_probability

    def predicted_wrong(boost: float) -> float:
        # Extinction leakage forming early hotspots in the recovering target.
        p_leak = 0.0
        q_miss = []
        for t, g, e50g in zip(times, gaps, e50_gap):
            leak = boost * e50g * x / (1.0 - x)
            p_leak += float(hotspot_probability(leak, t, detector))
            q_miss.append(1.0 - float(hotspot_probability(boost * e50g, g,
                                                          detector)))
        # A dip happens when every reset able to cover an instant is missed;
        # the next pulse (or the equally split readout) then re-crosses the
        # hold detector. The long pulse's own last reset covers the first
        # part of the window, minus a straggle allowance.
        long_cover = t_fall - 3e-9
        p_dip = 0.0
        for j, t in enumerate(list(times[1:]) + [d_read], start=1):
            if t <= long_cover:
                continue
            prob = 1.0
            for i in range(j):
                if t - t_fall < times[i] < t:
                    prob *= q_miss[i]
            p_dip += prob
        return p_leak + p_dip

    if steer_boost is None:
        grid = (1.5, 1.75, 2.0, 2.5, 3.0, 3.5, 4.0)
        steer_boost = min(grid, key=predicted_wrong)
    predicted = predicted_wrong(steer_boost)
    if predicted > max_wrong_probability:
        raise InfeasibleAttackError(
            f"predicted wrong-click probability {predicted:.2e} exceeds the "
            f"{max_wrong_probability:.0e} budget at {iface.extinction_db:.1f} dB "
            "extinction")

    energies = [steer_boost * e50g / ((1.0 - x) * loss) for e50g in e50_gap]
    e50_read = float(trigger_e50(d_read, detector))
    readout_energy = 2.0 * readout_boost * e50_read / loss

    return ControlDiagram(
        target=target, long_power=long_power, long_duration=long_duration,
        steering=tuple((e, t) for e, t in zip(energies, times)),
        readout_energy=readout_energy, readout_time=d_read,
        repeat_count=repeat_count, tail=tail)


def evaluate_attack(diagram: ControlDiagram, iface: InterferometerParams,
                    detector: DetectorParams, readout: ReadoutParams,
                    n_trials: int, seed: int, *, dt: float = 25e-12,
                    coincidence_window: float = 1e-9,
                    chunk: int = 4096) -> AttackReport:
    """Monte Carlo control fidelity of a diagram against both detectors.

    ``p_click_target`` counts readout-window clicks in the target detector
    (per repetition). ``p_click_wrong`` counts anything that would corrupt
    the receiver's record: any non-initial click in the hold detector, or a
    target-detector click outside the initial and readout windows.
    """
    wf = diagram.render(dt, iface)
    wf0, wf1 = interferometer_split(wf, iface)
    preamble = iface.delay_samples(dt) * dt
    init_w, read_w = diagram.windows()
    windows = [(a + preamble, b + preamble) for a, b in init_w + read_w]
    n_rep = diagram.repeat_count

    res = {}
    for comp, w in ((0, wf0), (1, wf1)):
        res[comp] = run_detector_batch(
            w.power, dt, detector, readout,
            n_trials=n_trials, master_seed=seed, component=comp,
            windows=windows, chunk=chunk)
    tgt = res[0] if diagram.target == D0 else res[1]
    hold = res[1] if diagram.target == D0 else res[0]

    init_counts = slice(0, n_rep)
    read_counts = slice(n_rep, 2 * n_rep)

    target_clicks = tgt.window_counts[:, read_counts] > 0
    p_target = float(np.mean(target_clicks))

    wrong_per_trial = (
        (hold.stray_counts > 0)
        | (hold.window_counts[:, read_counts].sum(axis=1) > 0)
        | (tgt.stray_counts > 0))
    n_wrong = int(np.count_nonzero(wrong_per_trial))
    p_wrong = n_wrong / n_trials

    both_initial = (~np.isnan(tgt.window_first[:, 0])) & (~np.isnan(hold.window_first[:, 0]))
    coincident = both_initial & (
        np.abs(tgt.window_first[:, 0] - hold.window_first[:, 0]) <= coincidence_window)
    p_double = float(np.mean(coincident))

    t_click = tgt.window_first[:, read_counts]
    offsets = np.array([[r * diagram.rep_period for r in range(n_rep)]])
    t_rel = (t_click - offsets).ravel()
    t_rel = t_rel[~np.isnan(t_rel)]
    jitter = float(_FWHM * np.std(t_rel)) if len(t_rel) >= 2 else float("nan")

    latches = int(tgt.latch_counts.sum() + hold.latch_counts.sum())
    n_eff = n_trials * n_rep
    return AttackReport(
        p_click_target=p_target,
        p_click_target_stderr=_binom_err(p_target, n_eff),
        p_click_wrong=p_wrong,
        p_click_wrong_stderr=_binom_err(p_wrong, n_trials),
        p_click_wrong_upper95=wilson_upper(n_wrong, n_trials),
        double_click_rate=p_double,
        double_click_stderr=_binom_err(p_double, n_trials),
        jitter_fwhm=jitter,
        latch_events=latches,
        trials=n_trials,
        sufficient_stats=n_trials >= 1000)


# --------------------------------------------------------------------------
# Latched-state attack


def _latched_trace(power: float, params: DetectorParams, readout: ReadoutParams,
                   duration: float, i_latched: float, dt: float = 25e-12):
    wf = rectangle_waveform(power, duration, dt, pre=2e-9, post=25e-9)
    tr = latched_pulse_response(wf, 0.1, params, i_latched)
    return amplify(tr, readout)


def _latched_peak(power: float, params: DetectorParams, readout: ReadoutParams,
                  duration: float, i_latched: float, dt: float = 25e-12) -> float:
    return float(_latched_trace(power, params, readout, duration,
                                i_latched, dt).v_out.max())


def _latched_clicks(power: float, theta: float, params: DetectorParams,
                    readout: ReadoutParams, duration: float,
                    i_latched: float) -> int:
    from .readout import discriminate
    tr = _latched_trace(power, params, readout, duration, i_latched)
    return len(discriminate(tr, readout.with_threshold(theta)))


def latched_trigger_power(threshold: float, params: DetectorParams,
                          readout: ReadoutParams, *, i_latched: float = None,
                          duration: float = 10e-9) -> float:
    """Trigger power that clicks at full power but not at -3 dB.

    Picks the largest power whose half still peaks below threshold, then
    verifies the full power crosses it. Raises InfeasibleAttackError when the
    threshold sits above the saturated latched response.
    """
    if i_latched is None:
        i_latched = params.i_latched_nominal
    theta = readout.quantized_threshold if threshold is None else threshold
    sat = _latched_peak(1.0, params, readout, duration, i_latched)
    if theta >= sat:
        raise InfeasibleAttackError(
            f"threshold {theta} V exceeds the saturated latched response {sat:.4f} V")
    for margin in (0.95, 0.97, 0.985, 0.995, 0.999):
        lo, hi = 1e-6, 1.0
        for _ in range(60):
            mid = math.sqrt(lo * hi)
            if _latched_peak(mid, params, readout, duration, i_latched) < margin * theta:
                lo = mid
            else:
                hi = mid
        power = 2.0 * lo
        # Verify against the dwell-qualified discriminator, not just the
        # peak: near saturation the response is flat and a bare peak margin
        # does not guarantee the minimum time above threshold.
        if (_latched_clicks(power, theta, params, readout, duration,
                            i_latched) >= 1
                and _latched_clicks(power / 2.0, theta, params, readout,
                                    duration, i_latched) == 0):
            return power
    raise InfeasibleAttackError(
        f"no trigger power separates full from -3 dB at threshold {theta} V")


def build_latched_attack(trigger_power: float, trigger_duration: float = 10e-9,
                         basis_match: bool = True, *, dt: float = 25e-12,
                         pre: float = 2e-9, post: float = 40e-9) -> OpticalWaveform:
    """Faked-state trigger as seen by one detector.

    A matching measurement basis delivers the full trigger power; a
    mismatched basis splits the pulse to both detectors, a 3 dB reduction.
    """
    power = trigger_power if basis_match else trigger_power / 2.0
    return rectangle_waveform(power, trigger_duration, dt, pre=pre, post=post)


# --------------------------------------------------------------------------
# Latching the device


@dataclass(frozen=True)
class LatchOutcome:
    latched: bool
    latch_time: float
    spurious_clicks: int
    i_latched: float
    waveform: OpticalWaveform


def latch_device(power: float, duration: float, *, params: DetectorParams,
                 readout: ReadoutParams, threshold: float = None,
                 seed: int = 0, component: int = 7) -> LatchOutcome:
    """Drive the detector into the latched state with a single CW exposure.

    Event-driven continuous-time simulation (exact for piecewise-constant
    illumination), so millisecond exposures cost only as many steps as there
    are detection events. Counts the spurious clicks a comparator at the
    given threshold would register while latching.
    """
    if power < 0 or duration <= 0:
        raise ValueError("power must be nonnegative and duration positive")
    rp = readout if threshold is None else readout.with_threshold(threshold)
    theta = rp.quantized_threshold
    rng = trial_generator(seed, 0, component)

    lam_sc = (params.dark_rate
              + params.eta * params.coupling * power / params.photon_energy
              + float(trigger_hazard_rate(power * params.sens_window,
                                          params.sens_e50_table[-1][0], params)))
    t_full = params.full_recovery_time
    grid = np.linspace(0.0, t_full, 2048)
    lam_rec = trigger_hazard_rate(power * params.sens_window, grid, params)
    big_lam = np.concatenate([[0.0], np.cumsum(
        0.5 * (lam_rec[1:] + lam_rec[:-1]) * np.diff(grid))])
    p_retrigger = -math.expm1(-big_lam[-1])

    v_plateau = (1.0 - params.f_reset) * params.i_b * R_LOAD * rp.net_voltage_gain
    t_fall = (params.tau_rec * math.log(v_plateau / theta)
              if 0 < theta < v_plateau else 0.0)

    t = 0.0
    heat = 0.0
    clicks = 0
    click_end = -math.inf
    latched = False
    t_latch = math.nan
    i_latched = math.nan

    while t < duration and lam_sc > 0 and not latched:
        wait = rng.exponential(1.0 / lam_sc)
        heat *= math.exp(-wait / params.latch_cool_time)
        t += wait
        if t >= duration:
            break
        while True:
            if 0 < theta < v_plateau:
                if t > click_end:
                    clicks += 1
                click_end = max(click_end, t + t_fall)
            u = rng.random()
            if u < p_retrigger:
                seg = params.t_hotspot + float(
                    np.interp(-math.log1p(-u), big_lam, grid))
                chained = True
            else:
                seg = params.t_hotspot + t_full
                chained = False
            if heat + seg >= params.latch_hold_time:
                t += params.latch_hold_time - heat
                latched = True
                t_latch = t
                i_latched = (params.i_latched_nominal
                             + (2.0 * rng.random() - 1.0) * params.i_latched_jitter)
                i_ss = float(latched_steady_current(power, 0.1, params, i_latched))
                v_latched = (i_latched - i_ss) * R_LOAD * rp.net_voltage_gain
                if v_latched >= theta > 0 and t > click_end:
                    clicks += 1
                break
            heat += seg
            t += seg
            if not chained:
                break

    dt_wf = max(100e-12, duration / (1 << 20))
    n = max(1, int(round(duration / dt_wf)))
    wf = OpticalWaveform(dt_wf, np.full(n, float(power)))
    return LatchOutcome(latched=latched, latch_time=t_latch,
                        spurious_clicks=clicks, i_latched=i_latched, waveform=wf)
