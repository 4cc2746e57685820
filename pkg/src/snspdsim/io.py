"""Parameter files and CSV outputs.

The parameter file is line based ``section.key = value`` text with ``#``
comments. Unknown keys are errors, every default is dumpable, and a load of
a dump reproduces the defaults exactly (floats are written with shortest
round-trip representation). CSV outputs start with comment lines recording
the configuration hash, the seed and the artifact version, so identical
configuration and seed give byte-identical files.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field

from .interferometer import InterferometerParams
from .params import BiasSource, DetectorParams
from .qkd import ProtocolConfig
from .readout import ReadoutParams


class ConfigError(ValueError):
    """Malformed or unknown configuration input."""


_FIELD_NOTES = {
    "detector.i_c": "critical current, A",
    "detector.i_b": "bias current in the normal regime, A (0.85 of i_c)",
    "detector.r_normal_total": "resistance of the fully normal wire, ohm",
    "detector.i_latched_nominal": "steady latched current, A",
    "detector.i_latched_jitter": "half-range of the per-latch current draw, A",
    "detector.tau_rec": "bias-current recovery time constant, s",
    "detector.f_reset": "fraction of i_b right after a hotspot reset",
    "detector.t_hotspot": "hold time at the reset current, s",
    "detector.eta": "single-photon detection efficiency at full recovery",
    "detector.dark_rate": "dark counts per second (fully recovered only)",
    "detector.cw_slope_low_v": "latched dR/dP at 0.1 V bias, ohm/W",
    "detector.cw_slope_high_v": "latched dR/dP at 10 V bias, ohm/W",
    "detector.latch_hold_time": "accumulated current suppression that latches, s",
    "detector.latch_cool_time": "suppression-accumulator decay constant, s",
    "detector.recovery_threshold_frac": "current fraction counted as recovered",
    "detector.sens_e50_table": "delay:e50:slope trigger-sensitivity anchors",
    "detector.sens_window": "trigger energy integration window, s",
    "detector.coupling": "optical/polarization coupling factor",
    "detector.wavelength": "operating wavelength, m",
    "detector.thermal_tau": "latched-branch thermal lag, s",
    "detector.t_jitter_sigma": "formation jitter sigma at full bias, s",
    "detector.t_jitter_exponent": "jitter growth as current drops",
    "detector.t_form_latency": "fixed trigger-to-formation latency, s",
    "bias.v_open": "bias source open voltage, V",
    "bias.r_series": "bias source series resistance, ohm",
    "bias.v_max": "bias source compliance limit, V",
    "readout.hp_cutoff": "RF chain low-frequency cutoff, Hz",
    "readout.lp_cutoff": "RF chain bandwidth, Hz",
    "readout.gain": "amplifier voltage gain",
    "readout.splitter_loss_db": "splitter loss to the counter arm, dB voltage",
    "readout.threshold": "comparator threshold, V",
    "readout.min_dwell": "minimum above-threshold dwell for a click, s",
    "readout.threshold_resolution": "comparator setting grid, V",
    "readout.hysteresis": "comparator hysteresis, V",
    "interferometer.delta_t": "arm delay, s",
    "interferometer.extinction_db": "routing extinction ratio, dB",
    "interferometer.insertion_loss_db": "insertion loss, dB",
    "qkd.protocol": "DPS or BB84",
    "qkd.n_bits": "key bits per run",
    "qkd.bit_slot": "bit slot, s",
    "qkd.delta_t": "DPS arm delay, s (must match interferometer)",
    "qkd.mu": "mean photons per pulse at the source",
    "qkd.channel_loss_db": "line loss, dB",
    "qkd.qber_abort_threshold": "abort threshold on the QBER",
    "qkd.threshold": "receiver comparator threshold, V",
    "qkd.trigger_duration": "BB84 faked-state trigger length, s",
}


@dataclass
class Config:
    detector: DetectorParams = field(default_factory=DetectorParams)
    bias: BiasSource = field(default_factory=BiasSource)
    readout: ReadoutParams = field(default_factory=ReadoutParams)
    interferometer: InterferometerParams = field(default_factory=InterferometerParams)
    qkd: ProtocolConfig = field(default_factory=ProtocolConfig)

    def sections(self):
        return (("detector", self.detector), ("bias", self.bias),
                ("readout", self.readout),
                ("interferometer", self.interferometer), ("qkd", self.qkd))


def _format_value(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(":".join(repr(float(x)) for x in row) for row in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_config(config: Config = None) -> str:
    """Render a configuration (defaults when omitted) as parameter-file text."""
    config = config or Config()
    lines = ["# snspdsim parameter file: section.key = value", ""]
    for name, obj in config.sections():
        lines.append(f"# [{name}]")
        for f in dataclasses.fields(obj):
            key = f"{name}.{f.name}"
            note = _FIELD_NOTES.get(key, "")
            if note:
                lines.append(f"# {note}")
            lines.append(f"{key} = {_format_value(getattr(obj, f.name))}")
        lines.append("")
    return "\n".join(lines)


def _parse_value(text: str, ftype, key: str):
    text = text.strip()
    try:
        if ftype is float:
            return float(text)
        if ftype is int:
            return int(text)
        if ftype is bool:
            return {"true": True, "false": False}[text.lower()]
        if ftype is str:
            return text
        if ftype is tuple:
            rows = []
            for row in text.split(","):
                parts = row.strip().split(":")
                if len(parts) != 3:
                    raise ValueError(row)
                rows.append(tuple(float(x) for x in parts))
            return tuple(rows)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"bad value for {key}: {text!r}") from exc
    raise ConfigError(f"unsupported field type for {key}")


def parse_config(text: str) -> Config:
    """Parse parameter-file text into validated parameter sets."""
    base = Config()
    overrides = {name: {} for name, _ in base.sections()}
    types = {}
    for name, obj in base.sections():
        for f in dataclasses.fields(obj):
            raw = type(getattr(obj, f.name))
            types[f"{name}.{f.name}"] = tuple if raw is tuple else raw
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key not in types:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        section, _, fname = key.partition(".")
        overrides[section][fname] = _parse_value(value, types[key], key)
    kwargs = {}
    for name, obj in base.sections():
        try:
            kwargs[name] = dataclasses.replace(obj, **overrides[name])
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"invalid [{name}] parameters: {exc}") from exc
    return Config(**kwargs)


def load_config(path) -> Config:
    try:
        with open(path) as fh:
            return parse_config(fh.read())
    except FileNotFoundError as exc:
        raise ConfigError(f"parameter file not found: {path}") from exc


def config_hash(config: Config, seed: int, extra: str = "") -> str:
    payload = dump_config(config) + f"\nseed={seed}\n{extra}"
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def write_csv(path, columns, rows, *, meta: dict) -> None:
    """CSV with a reproducibility comment header; floats use repr."""
    with open(path, "w", newline="") as fh:
        for key in sorted(meta):
            fh.write(f"# {key}={meta[key]}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(
                repr(v) if isinstance(v, float) else str(v) for v in row) + "\n")


def read_csv_rows(path):
    """(meta, columns, rows-of-strings) for files written by write_csv."""
    meta = {}
    columns = None
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key.strip()] = value.strip()
            elif columns is None:
                columns = line.split(",")
            elif line:
                rows.append(line.split(","))
    return meta, columns, rows
