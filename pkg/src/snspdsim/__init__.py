"""Simulator of a superconducting nanowire single-photon detector under
tailored bright illumination, with the readout chain, detector-control attack
engine and QKD Monte Carlo harness built on top of it."""

__version__ = "0.1.0"

from .params import BiasSource, DetectorParams, R_LOAD, default_bias, default_params, photon_energy
from .waveform import (OpticalWaveform, load_waveform_csv, rectangle_waveform,
                       save_waveform_csv, zero_waveform)
from .physics import (CalibrationError, DARK_COUNT, DetectorState, ElectricalTrace,
                      EventRecord, ExtrapolationError, HOTSPOT_FORMED,
                      HotspotActive, LATCH_ENTERED, LATCH_EXITED, Latched,
                      Recovering, Superconducting, calibrate_from_anchors,
                      hotspot_probability, latched_iv, latched_pulse_response,
                      make_latched, recovery_current, reset_latch, simulate,
                      single_photon_click_probability, step_detector)
from .readout import (ClickEvent, ReadoutParams, amplify, click_jitter,
                      click_probability, discriminate, quantize_threshold)
from .montecarlo import run_detector_batch, simulate_trace, trial_generator
from .interferometer import (BOTH, D0, D1, InterferometerParams,
                             interferometer_split, other_detector)
from .attack import (AttackReport, ControlDiagram, InfeasibleAttackError,
                     LatchOutcome, MAX_CONTROL_DURATION, build_deadtime_control_diagram,
                     build_latched_attack, evaluate_attack, latch_device,
                     latched_trigger_power, wilson_upper)
from .qkd import (BB84, DPS, ProtocolConfig, QkdOutcome, compute_qber,
                  run_bb84_latched_attack, run_dps_attack)
from .io import Config, ConfigError, dump_config, load_config, parse_config
