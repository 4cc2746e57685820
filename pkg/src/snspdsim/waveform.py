"""Sampled optical stimuli.

An :class:`OpticalWaveform` is a uniformly sampled optical power envelope with
a per-sample relative phase. Power drives the detector; phase is only consumed
by the interferometer routing in the attack engine. Sub-sample pulses (the
~50 ps triggers) are represented as single-sample energy deposits.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class OpticalWaveform:
    dt: float
    power: np.ndarray
    phase: np.ndarray = None
    wavelength: float = 1550e-9

    def __post_init__(self) -> None:
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        self.power = np.asarray(self.power, dtype=float)
        if self.phase is None:
            self.phase = np.zeros_like(self.power)
        self.phase = np.asarray(self.phase, dtype=float)
        if self.power.ndim != 1 or self.phase.shape != self.power.shape:
            raise ValueError("power and phase must be 1-d arrays of equal length")
        if not np.all(np.isfinite(self.power)):
            raise ValueError("power must be finite")
        if np.any(self.power < 0):
            raise ValueError("power must be nonnegative")
        if self.wavelength <= 0:
            raise ValueError("wavelength must be positive")

    def __len__(self) -> int:
        return len(self.power)

    @property
    def duration(self) -> float:
        return len(self.power) * self.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.power)) * self.dt

    def energy(self) -> float:
        """Total pulse energy, sum of P*dt."""
        return float(np.sum(self.power)) * self.dt

    def copy(self) -> "OpticalWaveform":
        return OpticalWaveform(self.dt, self.power.copy(), self.phase.copy(),
                               self.wavelength)

    def add_deposit(self, energy: float, time: float) -> None:
        """Deposit a sub-sample pulse of the given energy at the given time."""
        if energy < 0:
            raise ValueError("energy must be nonnegative")
        k = int(round(time / self.dt))
        if not 0 <= k < len(self.power):
            raise ValueError("deposit time outside waveform")
        self.power[k] += energy / self.dt


def zero_waveform(duration: float, dt: float, wavelength: float = 1550e-9) -> OpticalWaveform:
    n = max(1, int(round(duration / dt)))
    return OpticalWaveform(dt, np.zeros(n), np.zeros(n), wavelength)


def rectangle_waveform(power: float, duration: float, dt: float,
                       pre: float = 0.0, post: float = 0.0,
                       wavelength: float = 1550e-9) -> OpticalWaveform:
    """Rectangular pulse with optional dark padding before and after."""
    n_pre = int(round(pre / dt))
    n_on = int(round(duration / dt))
    n_post = int(round(post / dt))
    p = np.zeros(n_pre + n_on + n_post)
    p[n_pre:n_pre + n_on] = power
    return OpticalWaveform(dt, p, np.zeros_like(p), wavelength)


def save_waveform_csv(path, wf: OpticalWaveform) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("t_s,power_W,phase_rad\n")
        t = wf.times
        for k in range(len(wf)):
            fh.write(f"{t[k]:.12e},{wf.power[k]:.12e},{wf.phase[k]:.12e}\n")


def load_waveform_csv(path, wavelength: float = 1550e-9,
                      rel_tol: float = 1e-6) -> OpticalWaveform:
    """Load a waveform file, enforcing a uniform sample period."""
    data = np.genfromtxt(path, delimiter=",", names=True)
    if data.size == 0:
        raise ValueError(f"empty waveform file: {path}")
    names = data.dtype.names
    if names is None or tuple(names) != ("t_s", "power_W", "phase_rad"):
        raise ValueError("waveform CSV must have header t_s,power_W,phase_rad")
    t = np.atleast_1d(data["t_s"])
    power = np.atleast_1d(data["power_W"])
    phase = np.atleast_1d(data["phase_rad"])
    if len(t) < 2:
        raise ValueError("waveform needs at least two samples")
    steps = np.diff(t)
    dt = float(np.mean(steps))
    if dt <= 0 or np.any(np.abs(steps - dt) > rel_tol * dt):
        raise ValueError("waveform samples are not uniformly spaced")
    return OpticalWaveform(dt, power, phase, wavelength)
