"""Monte Carlo of intercept-resend faked-state attacks on a QKD receiver.

Two protocol harnesses share the detector model:

* DPS: the receiver decodes phase differences between adjacent weak pulses
  with an unbalanced interferometer. The eavesdropper measures every bit with
  ideal apparatus and, per detected bit, plays a deadtime-extension control
  diagram that forces a click in the matching detector. The receiver applies
  a coincidence discard (the diagram's initial double click), a mutual
  deadtime rule, and slot binning.

* BB84: both receiver detectors are first driven into the latched state.
  Matched-basis resends use a full-power trigger that clicks exactly the
  intended detector; mismatched-basis resends split to both detectors at
  -3 dB and stay below threshold.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .attack import (ControlDiagram, InfeasibleAttackError, _latched_peak,
                     build_deadtime_control_diagram, latch_device)
from .interferometer import D0, D1, InterferometerParams, interferometer_split
from .montecarlo import run_detector_batch, trial_generator
from .params import DetectorParams
from .readout import ReadoutParams

DPS = "DPS"
BB84 = "BB84"


@dataclass(frozen=True)
class ProtocolConfig:
    protocol: str = DPS
    n_bits: int = 10000
    bit_slot: float = 10e-9
    delta_t: float = 5e-9
    mu: float = 0.2
    channel_loss_db: float = 0.0
    qber_abort_threshold: float = 0.11
    threshold: float = 11.6e-3           # comparator setting at the receiver
    trigger_duration: float = 10e-9      # BB84 faked-state trigger length

    def __post_init__(self) -> None:
        if self.protocol not in (DPS, BB84):
            raise ValueError("protocol must be DPS or BB84")
        if self.n_bits < 0:
            raise ValueError("n_bits must be nonnegative")
        if self.bit_slot <= 0 or self.delta_t <= 0:
            raise ValueError("bit_slot and delta_t must be positive")
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        if self.channel_loss_db < 0:
            raise ValueError("channel_loss_db must be nonnegative")
        if not 0.0 < self.qber_abort_threshold < 1.0:
            raise ValueError("qber_abort_threshold must be in (0, 1)")


@dataclass(frozen=True)
class QkdOutcome:
    protocol: str
    n_bits: int
    sifted_bits: int
    errors: int
    qber: float
    eve_known_fraction: float
    detector_rates: tuple
    aborted: bool
    empty_sift: bool = False
    notes: str = ""

    def __post_init__(self) -> None:
        if not self.empty_sift:
            assert self.aborted == (self.qber > self._abort_threshold), \
                "abort flag inconsistent with QBER"

    _abort_threshold: float = 0.11


def compute_qber(alice_bits, bob_bits, sift_mask) -> float:
    """Mismatch fraction over sifted positions; 0 (with a warning) when empty."""
    a = np.asarray(alice_bits)
    b = np.asarray(bob_bits)
    m = np.asarray(sift_mask, dtype=bool)
    if not (len(a) == len(b) == len(m)):
        raise ValueError("alice, bob and sift sequences must have equal length")
    n = int(np.count_nonzero(m))
    if n == 0:
        warnings.warn("empty sift: QBER reported as 0", stacklevel=2)
        return 0.0
    return float(np.count_nonzero(a[m] != b[m]) / n)


def _outcome(config: ProtocolConfig, sifted: int, errors: int, known: int,
             rates, notes: str = "") -> QkdOutcome:
    empty = sifted == 0
    qber = 0.0 if empty else errors / sifted
    return QkdOutcome(
        protocol=config.protocol, n_bits=config.n_bits, sifted_bits=sifted,
        errors=errors, qber=qber,
        eve_known_fraction=0.0 if empty else known / sifted,
        detector_rates=tuple(rates),
        aborted=(not empty) and qber > config.qber_abort_threshold,
        empty_sift=empty, notes=notes,
        _abort_threshold=config.qber_abort_threshold)


# --------------------------------------------------------------------------
# DPS


def _dps_baseline(config: ProtocolConfig, iface: InterferometerParams,
                  detector: DetectorParams, seed: int,
                  ideal_alignment: bool = True) -> QkdOutcome:
    """No-eavesdropper run at slot granularity.

    With ideal interferometer alignment the wrong-detector rate is set only
    by dark counts, so the QBER converges to the dark-count floor.
    """
    rng = trial_generator(seed, 0, component=100)
    n = config.n_bits
    bits = rng.integers(0, 2, n)
    mu_eff = config.mu * 10.0 ** (-config.channel_loss_db / 10.0)
    mu_eff *= iface.transmission
    x = 0.0 if ideal_alignment else iface.extinction_fraction
    p_sig = -np.expm1(-detector.eta * detector.coupling * mu_eff * (1.0 - x))
    p_leak = -np.expm1(-detector.eta * detector.coupling * mu_eff * x)
    p_dark = -math.expm1(-detector.dark_rate * config.bit_slot)

    def click_p(signal):
        return 1.0 - (1.0 - signal) * (1.0 - p_dark)

    u = rng.random((2, n))
    p_correct = click_p(p_sig)
    p_wrong = click_p(p_leak)
    click_c = u[0] < p_correct
    click_w = u[1] < p_wrong

    lock_slots = max(1, int(math.ceil(detector.full_recovery_time / config.bit_slot)))
    sifted = errors = 0
    rates = [0, 0]
    lock_until = -1
    for k in range(n):
        if k < lock_until or not (click_c[k] or click_w[k]):
            continue
        if click_c[k] and click_w[k]:
            lock_until = k + lock_slots     # double click: discard both
            continue
        lock_until = k + lock_slots
        bob_bit = bits[k] if click_c[k] else 1 - bits[k]
        det = int(bob_bit)
        rates[det] += 1
        sifted += 1
        errors += int(bob_bit != bits[k])
    scale = 1.0 / n if n else 0.0
    return _outcome(config, sifted, errors, 0,
                    (rates[0] * scale, rates[1] * scale), notes="no attack")


def run_dps_attack(config: ProtocolConfig, iface: InterferometerParams,
                   detector: DetectorParams, readout: ReadoutParams,
                   seed: int, *, attack: bool = True, dt: float = 25e-12,
                   diagram_kwargs: dict = None,
                   coincidence_window: float = 1e-9) -> QkdOutcome:
    """Full intercept-resend run against the DPS receiver.

    Per detected bit the eavesdropper measures the phase difference (ideal
    apparatus) and plays the control diagram for the matching detector; the
    receiver's clicks are discriminated, coincidence-discarded, deadtime
    filtered and binned into bit slots.
    """
    if config.protocol != DPS:
        raise ValueError("config.protocol must be DPS")
    if abs(config.delta_t - iface.delta_t) > 1e-15:
        raise ValueError("config.delta_t must match the interferometer delay")
    if not attack:
        return _dps_baseline(config, iface, detector, seed)

    rp = readout.with_threshold(config.threshold)
    diagram_kwargs = diagram_kwargs or {}
    diag = {d: build_deadtime_control_diagram(d, iface, detector, rp,
                                              **diagram_kwargs)
            for d in (D0, D1)}

    rng = trial_generator(seed, 0, component=100)
    n = config.n_bits
    alice_bits = rng.integers(0, 2, n)
    u_neighbor = rng.random(n)

    preamble = iface.delay_samples(dt) * dt
    results = {}
    for bit_value, d in ((0, D0), (1, D1)):
        ids = np.flatnonzero(alice_bits == bit_value)
        if len(ids) == 0:
            continue
        wf = diag[d].render(dt, iface)
        wf0, wf1 = interferometer_split(wf, iface)
        _, read_w = diag[d].windows()
        for comp, w in ((0, wf0), (1, wf1)):
            results[(bit_value, comp)] = run_detector_batch(
                w.power, dt, detector, rp,
                n_trials=len(ids), master_seed=seed, component=comp,
                trial_ids=ids, record_clicks=True)

    lock = detector.full_recovery_time
    sifted = errors = known = 0
    rates = [0, 0]
    latch_events = 0
    for bit_value, d in ((0, D0), (1, D1)):
        ids = np.flatnonzero(alice_bits == bit_value)
        if len(ids) == 0:
            continue
        dg = diag[d]
        t_exp = (preamble + dg.long_duration + dg.readout_time
                 + detector.t_form_latency)
        r0 = results[(bit_value, 0)]
        r1 = results[(bit_value, 1)]
        latch_events += int(r0.latch_counts.sum() + r1.latch_counts.sum())
        for j, bit_idx in enumerate(ids):
            clicks = ([(t, 0) for t in r0.clicks[j]]
                      + [(t, 1) for t in r1.clicks[j]])
            clicks.sort()
            accepted = []
            i = 0
            while i < len(clicks):
                t, det = clicks[i]
                if (i + 1 < len(clicks)
                        and clicks[i + 1][1] != det
                        and clicks[i + 1][0] - t <= coincidence_window):
                    i += 2              # coincident pair: discard both
                    continue
                if accepted and t - accepted[-1][0] < lock:
                    i += 1              # mutual deadtime
                    continue
                accepted.append((t, det))
                i += 1
            for t, det in accepted:
                slot = int(round((t - t_exp) / config.bit_slot))
                sifted += 1
                rates[det] += 1
                if slot == 0:
                    known += int(det == bit_value)
                    errors += int(det != bit_value)
                else:
                    # Stray click lands in a neighboring slot whose key bit
                    # is independent of the detector that fired.
                    errors += int(u_neighbor[bit_idx] < 0.5)
    notes = "attack" + (f"; latch_events={latch_events}" if latch_events else "")
    scale = 1.0 / n if n else 0.0
    return _outcome(config, sifted, errors, known,
                    (rates[0] * scale, rates[1] * scale), notes=notes)


# --------------------------------------------------------------------------
# BB84 with latched detectors


def _bb84_trigger_window(theta, detector, readout, i_darks, duration):
    """Common trigger power clicking each latched detector at full power
    but neither at half power; None when no such power exists."""
    p_req = []
    for i_d in i_darks:
        sat = _latched_peak(1.0, detector, readout, duration, i_d)
        if theta >= sat:
            return None
        lo, hi = 1e-6, 1.0
        for _ in range(60):
            mid = math.sqrt(lo * hi)
            if _latched_peak(mid, detector, readout, duration, i_d) < theta:
                lo = mid
            else:
                hi = mid
        p_req.append(hi)
    p_lo, p_hi = max(p_req), 2.0 * min(p_req)
    if p_lo >= 0.98 * p_hi:
        return None
    return math.sqrt(p_lo * p_hi)


def run_bb84_latched_attack(config: ProtocolConfig, detector: DetectorParams,
                            readout: ReadoutParams, seed: int, *,
                            latch_power: float = 50e-9,
                            latch_duration: float = 5e-3,
                            max_latch_attempts: int = 50) -> QkdOutcome:
    """Faked-state attack with both receiver detectors latched.

    The latched current of each detector is drawn per latch event; the
    eavesdropper re-latches until a single trigger power separates full
    from -3 dB at both detectors, then resends every intercepted bit.
    """
    if config.protocol != BB84:
        raise ValueError("config.protocol must be BB84")
    rp = readout.with_threshold(config.threshold)
    theta = rp.quantized_threshold

    i_darks = None
    attempts = 0
    power = None
    saturated_blind = False
    for attempt in range(max_latch_attempts):
        attempts += 1
        outs = [latch_device(latch_power, latch_duration, params=detector,
                             readout=rp, seed=seed, component=10 + 2 * attempt + d)
                for d in (0, 1)]
        if not all(o.latched for o in outs):
            continue
        i_darks = [o.i_latched for o in outs]
        sat = [_latched_peak(1.0, detector, rp, config.trigger_duration, i_d)
               for i_d in i_darks]
        if all(theta >= s for s in sat):
            saturated_blind = True      # threshold above both saturated responses
            break
        power = _bb84_trigger_window(theta, detector, rp, i_darks,
                                     config.trigger_duration)
        if power is not None:
            break
    if i_darks is None:
        raise InfeasibleAttackError("device did not latch")
    if power is None and not saturated_blind:
        raise InfeasibleAttackError(
            "no common trigger power found for the drawn latched currents")

    rng = trial_generator(seed, 0, component=100)
    n = config.n_bits
    alice_bits = rng.integers(0, 2, n)
    alice_bases = rng.integers(0, 2, n)
    eve_bases = rng.integers(0, 2, n)
    eve_bits = np.where(eve_bases == alice_bases, alice_bits,
                        rng.integers(0, 2, n))
    bob_bases = rng.integers(0, 2, n)

    if saturated_blind:
        clicks = np.zeros(n, dtype=bool)
    else:
        # Full power reaches the detector of Eve's bit when the bases match;
        # otherwise both detectors of Bob's basis see -3 dB and stay silent.
        peaks = np.array([_latched_peak(power, detector, rp,
                                        config.trigger_duration, i_d)
                          for i_d in i_darks])
        clicks = (bob_bases == eve_bases) & (peaks[eve_bits] >= theta)

    sift = (alice_bases == bob_bases) & clicks
    bob_bits = eve_bits
    sifted = int(np.count_nonzero(sift))
    errors = int(np.count_nonzero(sift & (bob_bits != alice_bits)))
    known = int(np.count_nonzero(sift & (eve_bases == bob_bases)))
    rates = ((float(np.count_nonzero(clicks & (eve_bits == 0)) / n),
              float(np.count_nonzero(clicks & (eve_bits == 1)) / n))
             if n else (0.0, 0.0))
    notes = (f"latch_attempts={attempts}; "
             + ("rate collapsed: threshold above saturated response"
                if saturated_blind else f"trigger_power={power:.3e} W"))
    return _outcome(config, sifted, errors, known, rates, notes=notes)
