"""Calibrated device constants for the nanowire detector and its bias circuit.

All quantities are SI (amperes, volts, ohms, seconds, joules, watts). The
defaults describe one cryogenic nanowire sample biased at 85% of its critical
current, together with the phenomenological constants of the response model:

* an exponential bias-current recovery after each hotspot,
* a log-logistic trigger-energy sensitivity that deepens as the current
  recovers (``sens_e50_table``),
* a latched operating branch where a self-heating normal domain carries a
  small voltage-independent current, and
* a leaky thermal accumulator that decides when sustained current
  suppression tips the wire into the latched state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

# Load seen by the nanowire through the coax / bias tee.
R_LOAD = 50.0

# Planck constant times speed of light, J*m.
_HC = 6.62607015e-34 * 2.99792458e8


def photon_energy(wavelength: float) -> float:
    """Energy of one photon at the given vacuum wavelength, in joules."""
    if wavelength <= 0:
        raise ValueError("wavelength must be positive")
    return _HC / wavelength


@dataclass(frozen=True)
class DetectorParams:
    """Physical constants of the nanowire, bias point and sensitivity model."""

    i_c: float = 22.5e-6 / 0.85          # critical current, A
    i_b: float = 22.5e-6                 # bias current in normal regime, A
    r_normal_total: float = 2.3e6        # whole wire normally conductive, ohm
    i_latched_nominal: float = 7.0e-6    # steady latched current, A
    i_latched_jitter: float = 1.0e-6     # half-range of per-latch draw, A
    tau_rec: float = 14.844e-9           # current recovery time constant, s
    f_reset: float = 0.26                # current fraction right after reset
    t_hotspot: float = 1.0e-9            # hold time at the reset level, s
    eta: float = 2.2e-5                  # single-photon detection efficiency
    dark_rate: float = 0.25              # dark counts per second
    cw_slope_low_v: float = 1.875e7      # latched dR/dP at 0.1 V, ohm/W
    cw_slope_high_v: float = 5.5e6       # latched dR/dP at 10 V, ohm/W
    latch_hold_time: float = 1.0e-6      # accumulated suppression that latches, s
    latch_cool_time: float = 5.0e-6      # accumulator decay while recovered, s
    recovery_threshold_frac: float = 0.95
    # (delay after reset, 50% trigger energy, logistic slope) anchors.
    sens_e50_table: tuple = (
        (2e-9, 110e-15, 6.0),
        (3e-9, 78e-15, 6.0),
        (5e-9, 46e-15, 6.0),
        (8e-9, 25e-15, 6.0),
        (10e-9, 21e-15, 6.0),
        (20e-9, 14e-15, 6.0),
        (40e-9, 10e-15, 6.0),
    )
    sens_window: float = 150e-12         # energy integration window, s
    coupling: float = 1.0                # optical/polarization coupling factor
    wavelength: float = 1550e-9          # m
    thermal_tau: float = 1.0e-9          # latched-branch thermal lag, s
    t_jitter_sigma: float = 72e-12       # formation jitter sigma at full bias, s
    t_jitter_exponent: float = 2.0       # jitter growth vs suppressed current
    t_form_latency: float = 0.5e-9       # fixed formation latency, s

    def __post_init__(self) -> None:
        if not (0 < self.i_latched_nominal < self.i_b < self.i_c):
            raise ValueError("require 0 < i_latched < i_b < i_c")
        for name in ("r_normal_total", "tau_rec", "t_hotspot", "latch_hold_time",
                     "latch_cool_time", "sens_window", "thermal_tau",
                     "cw_slope_low_v", "cw_slope_high_v", "wavelength",
                     "t_jitter_sigma", "t_form_latency"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.eta < 1.0:
            raise ValueError("eta must be in (0, 1)")
        if not 0.0 < self.coupling <= 1.0:
            raise ValueError("coupling must be in (0, 1]")
        if not 0.0 < self.f_reset < 1.0:
            raise ValueError("f_reset must be in (0, 1)")
        if not 0.0 < self.recovery_threshold_frac < 1.0:
            raise ValueError("recovery_threshold_frac must be in (0, 1)")
        if self.dark_rate < 0:
            raise ValueError("dark_rate must be nonnegative")
        if self.i_latched_jitter < 0:
            raise ValueError("i_latched_jitter must be nonnegative")
        tab = self.sens_e50_table
        if len(tab) < 1:
            raise ValueError("sens_e50_table must not be empty")
        for delay, e50, slope in tab:
            if delay <= 0 or e50 <= 0 or slope <= 0:
                raise ValueError("sensitivity anchors must be positive")
        delays = [row[0] for row in tab]
        e50s = [row[1] for row in tab]
        if any(b <= a for a, b in zip(delays, delays[1:])):
            raise ValueError("sens_e50_table delays must be strictly increasing")
        if any(b >= a for a, b in zip(e50s, e50s[1:])):
            raise ValueError("sens_e50_table e50 must be strictly decreasing")

    @property
    def i_reset(self) -> float:
        """Current immediately after a hotspot reset, A."""
        return self.f_reset * self.i_b

    @property
    def full_recovery_time(self) -> float:
        """Time after reset at which the current reaches the recovered fraction."""
        return self.tau_rec * math.log(
            (1.0 - self.f_reset) / (1.0 - self.recovery_threshold_frac))

    @property
    def photon_energy(self) -> float:
        return photon_energy(self.wavelength)

    def with_(self, **kwargs) -> "DetectorParams":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class BiasSource:
    """DC bias circuit: a small voltage source behind a series resistor.

    Into a superconducting (zero resistance) wire this behaves as a current
    source delivering v_open / r_series; once the wire latches its resistance
    dwarfs r_series and the circuit acts as a voltage source of about v_open.
    """

    v_open: float = 0.1
    r_series: float = 0.1 / 22.5e-6
    v_max: float = 10.0

    def __post_init__(self) -> None:
        if self.v_open <= 0 or self.r_series <= 0 or self.v_max <= 0:
            raise ValueError("bias source values must be positive")

    @property
    def i_supply(self) -> float:
        """Short-circuit current, equals the normal-regime bias current."""
        return self.v_open / self.r_series


def default_params() -> DetectorParams:
    """Calibrated parameter set for the reference sample."""
    return DetectorParams()


def default_bias() -> BiasSource:
    return BiasSource()
