"""Unbalanced Mach-Zehnder routing between the two receiver detectors.

The field interferes with its copy delayed by the arm imbalance; the phase
difference across that delay steers power between the output ports. The model
routes each sample's power by that phase difference:

    w0(t) = cos^2((phi(t) - phi(t - delta_t)) / 2)

so a phase difference of 0 routes to detector D0 and pi to D1, and power is
conserved sample by sample. A finite extinction ratio mixes a fraction
x = 10^(-ER/10) of each port into the other, which makes the port power ratio
for a steered pulse exactly the extinction ratio. Phase is defined at every
sample (the sender's modulator runs continuously), so isolated short pulses
are steered by the phase laid down one arm delay earlier.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .waveform import OpticalWaveform

D0 = "D0"
D1 = "D1"
BOTH = "BOTH"

# Phase difference across the arm delay that routes to each destination.
ROUTE_PHASE = {D0: 0.0, D1: math.pi, BOTH: math.pi / 2.0}


def other_detector(det: str) -> str:
    if det == D0:
        return D1
    if det == D1:
        return D0
    raise ValueError(f"unknown detector {det!r}")


@dataclass(frozen=True)
class InterferometerParams:
    delta_t: float = 5e-9
    extinction_db: float = 20.0
    insertion_loss_db: float = 0.0

    def __post_init__(self) -> None:
        if self.delta_t <= 0:
            raise ValueError("delta_t must be positive")
        if self.extinction_db <= 0:
            raise ValueError("extinction_db must be positive")
        if self.insertion_loss_db < 0:
            raise ValueError("insertion_loss_db must be nonnegative")

    @property
    def extinction_fraction(self) -> float:
        return 10.0 ** (-self.extinction_db / 10.0)

    @property
    def transmission(self) -> float:
        return 10.0 ** (-self.insertion_loss_db / 10.0)

    def delay_samples(self, dt: float) -> int:
        m = self.delta_t / dt
        if abs(m - round(m)) > 1e-6 * max(m, 1.0):
            raise ValueError(
                f"sample period {dt} does not divide the arm delay {self.delta_t}")
        return int(round(m))


def interferometer_split(waveform: OpticalWaveform,
                         params: InterferometerParams):
    """Split a waveform onto the two detectors.

    Returns (waveform_D0, waveform_D1). The first arm-delay's worth of
    samples is referenced to the waveform's initial phase; senders should
    begin with a dark preamble of at least one arm delay.
    """
    m = params.delay_samples(waveform.dt)
    phi = waveform.phase
    delayed = np.concatenate([np.full(min(m, len(phi)), phi[0] if len(phi) else 0.0),
                              phi[:-m] if m < len(phi) else phi[:0]])
    dphi = phi - delayed
    w0 = np.cos(dphi / 2.0) ** 2
    x = params.extinction_fraction
    scale = params.transmission * waveform.power
    p0 = scale * ((1.0 - x) * w0 + x * (1.0 - w0))
    p1 = scale * ((1.0 - x) * (1.0 - w0) + x * w0)
    return (OpticalWaveform(waveform.dt, p0, phi.copy(), waveform.wavelength),
            OpticalWaveform(waveform.dt, p1, phi.copy(), waveform.wavelength))
