"""Command-line front end.

Subcommands: trace, sweep-cw, sweep-threshold, sweep-trigger, deadtime,
attack-eval, qkd, emit-defaults. Every run requires an explicit seed and
writes CSV files whose comment header records the configuration hash, seed
and artifact version; identical configuration and seed give byte-identical
output. Exit codes: 0 success, 2 configuration error, 3 infeasible attack,
4 I/O error.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .attack import (InfeasibleAttackError, build_deadtime_control_diagram,
                     evaluate_attack, latched_trigger_power)
from .interferometer import InterferometerParams
from .io import Config, ConfigError, config_hash, dump_config, load_config, write_csv
from .montecarlo import run_detector_batch
from .physics import hotspot_probability, latched_iv, make_latched
from .qkd import BB84, DPS, run_bb84_latched_attack, run_dps_attack
from .readout import quantize_threshold
from .waveform import load_waveform_csv, rectangle_waveform
import dataclasses


def _float_list(text: str):
    return [float(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="snspdsim",
        description="Nanowire single-photon detector bright-light control simulator")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, trials_default=None):
        sp.add_argument("--params", type=str, default=None,
                        help="parameter file (defaults when omitted)")
        sp.add_argument("--seed", type=int, required=True,
                        help="master seed (no wall-clock seeding)")
        sp.add_argument("--out", type=str, default=".", help="output directory")
        sp.add_argument("--force", action="store_true",
                        help="overwrite existing output files")
        if trials_default is not None:
            sp.add_argument("--trials", type=int, default=trials_default)

    sp = sub.add_parser("trace", help="simulate detector traces for a waveform")
    common(sp, trials_default=1)
    sp.add_argument("--waveform", type=str, default=None,
                    help="waveform CSV (t_s,power_W,phase_rad)")
    sp.add_argument("--power", type=float, default=2.5e-3,
                    help="rectangle power when no waveform file is given, W")
    sp.add_argument("--duration", type=float, default=48e-9,
                    help="rectangle duration, s")
    sp.add_argument("--dt", type=float, default=25e-12)
    sp.add_argument("--post", type=float, default=100e-9,
                    help="dark time appended after the rectangle, s")

    sp = sub.add_parser("sweep-cw", help="latched-state I-V vs optical power")
    common(sp)
    sp.add_argument("--v-grid", type=str, default="0.1,0.5,2,5,10")
    sp.add_argument("--p-max", type=float, default=20e-3)
    sp.add_argument("--p-steps", type=int, default=21)

    sp = sub.add_parser("sweep-threshold",
                        help="latched trigger click probability vs threshold")
    common(sp, trials_default=10000)
    sp.add_argument("--t-min", type=float, default=0.2e-3)
    sp.add_argument("--t-max", type=float, default=40e-3)
    sp.add_argument("--t-step", type=float, default=0.4e-3)
    sp.add_argument("--trigger-power", type=float, default=20e-3)
    sp.add_argument("--power-scales", type=str, default="1,0.5")
    sp.add_argument("--trigger-duration", type=float, default=10e-9)

    sp = sub.add_parser("sweep-trigger",
                        help="hotspot probability vs trigger energy and delay")
    common(sp)
    sp.add_argument("--delays", type=str, default="2e-9,3e-9,5e-9,8e-9,10e-9,20e-9,40e-9")
    sp.add_argument("--e-min", type=float, default=1e-15)
    sp.add_argument("--e-max", type=float, default=1e-12)
    sp.add_argument("--e-steps", type=int, default=61)

    sp = sub.add_parser("deadtime",
                        help="recovery dynamics under bright rectangles")
    common(sp, trials_default=600)
    sp.add_argument("--powers", type=str, default="0.25e-3,0.5e-3")
    sp.add_argument("--duration", type=float, default=48e-9)
    sp.add_argument("--dt", type=float, default=25e-12)

    sp = sub.add_parser("attack-eval",
                        help="deadtime-extension control fidelity sweeps")
    common(sp, trials_default=10000)
    sp.add_argument("--er-grid", type=str, default="20,10")
    sp.add_argument("--thresholds", type=str, default="11.6e-3")
    sp.add_argument("--delta-t", type=float, default=None,
                    help="arm delay override, s")
    sp.add_argument("--target", type=str, default="D0", choices=("D0", "D1"))
    sp.add_argument("--repeat", type=int, default=1)

    sp = sub.add_parser("qkd", help="end-to-end key exchange Monte Carlo")
    common(sp)
    sp.add_argument("--protocol", type=str, default="dps",
                    choices=("dps", "bb84"))
    sp.add_argument("--bits", type=int, default=None,
                    help="override qkd.n_bits from the parameter file")
    sp.add_argument("--no-attack", action="store_true",
                    help="transparent-eavesdropper baseline")

    sp = sub.add_parser("emit-defaults",
                        help="write the calibrated default parameter file")
    sp.add_argument("--out", type=str, default=None,
                    help="file path (stdout when omitted)")
    sp.add_argument("--force", action="store_true")
    return p


def _load(args) -> Config:
    return load_config(args.params) if args.params else Config()


def _outfile(args, name: str) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    if path.exists() and not args.force:
        raise FileExistsError(f"{path} exists; pass --force to overwrite")
    return path


def _meta(cfg: Config, args, **extra):
    meta = {"config": config_hash(cfg, args.seed, extra=args.command),
            "seed": args.seed, "version": __version__,
            "command": args.command}
    meta.update(extra)
    return meta


def cmd_trace(args) -> None:
    cfg = _load(args)
    if args.waveform:
        wf = load_waveform_csv(args.waveform,
                               wavelength=cfg.detector.wavelength)
    else:
        wf = rectangle_waveform(args.power, args.duration, args.dt,
                                post=args.post,
                                wavelength=cfg.detector.wavelength)
    res = run_detector_batch(
        wf.power, wf.dt, cfg.detector, n_trials=args.trials,
        master_seed=args.seed, v_bias=cfg.bias.v_open,
        record_trace=args.trials <= 8, record_events=args.trials <= 64,
        collect_formation_times=True)
    meta = _meta(cfg, args)
    if res.v_pre is not None:
        ts = np.arange(len(wf.power)) * wf.dt
        write_csv(_outfile(args, "trace.csv"), ["t_s", "v_out_V"],
                  [(float(t), float(v)) for t, v in zip(ts, res.v_pre[0])],
                  meta=meta)
    if res.events is not None:
        rows = [(float(ev.time), ev.kind)
                for ev in sorted(res.events[0], key=lambda e: e.time)]
        write_csv(_outfile(args, "events.csv"), ["time_s", "kind"], rows,
                  meta=meta)
    write_csv(_outfile(args, "trial_summary.csv"),
              ["trial", "formations", "latched"],
              [(k, int(res.formation_counts[k]), int(res.latch_counts[k]))
               for k in range(args.trials)], meta=meta)


def cmd_sweep_cw(args) -> None:
    cfg = _load(args)
    rows = []
    for v in _float_list(args.v_grid):
        for pw in np.linspace(0.0, args.p_max, args.p_steps):
            i, r = latched_iv(v, float(pw), cfg.detector)
            rows.append((float(v), float(pw), float(i), float(r)))
    write_csv(_outfile(args, "cw_sweep.csv"),
              ["v_bias_V", "power_W", "current_A", "resistance_Ohm"], rows,
              meta=_meta(cfg, args))


def cmd_sweep_threshold(args) -> None:
    from .readout import click_probability

    cfg = _load(args)
    state0 = make_latched(cfg.detector, cfg.bias.v_open)
    scales = _float_list(args.power_scales)
    rows = []
    thresholds = np.arange(args.t_min, args.t_max + args.t_step / 2, args.t_step)
    for theta in thresholds:
        theta = quantize_threshold(float(theta),
                                   cfg.readout.threshold_resolution)
        for scale in scales:
            wf = rectangle_waveform(args.trigger_power * scale,
                                    args.trigger_duration, 25e-12,
                                    pre=2e-9, post=40e-9)
            p, err = click_probability(wf, state0, theta, args.trials,
                                       args.seed, params=cfg.detector,
                                       readout=cfg.readout)
            rows.append((theta, scale, p, err))
    write_csv(_outfile(args, "threshold_sweep.csv"),
              ["threshold_V", "power_scale", "click_prob", "stderr"], rows,
              meta=_meta(cfg, args))


def cmd_sweep_trigger(args) -> None:
    cfg = _load(args)
    energies = np.geomspace(args.e_min, args.e_max, args.e_steps)
    rows = []
    for d in _float_list(args.delays):
        for e in energies:
            rows.append((float(d), float(e),
                         float(hotspot_probability(float(e), d, cfg.detector))))
    photons = 1e-13 / cfg.detector.photon_energy
    write_csv(_outfile(args, "trigger_sweep.csv"),
              ["delay_s", "energy_J", "probability"], rows,
              meta=_meta(cfg, args, photons_per_100fJ=f"{photons:.0f}"))


def cmd_deadtime(args) -> None:
    cfg = _load(args)
    rows = []
    for pw in _float_list(args.powers):
        wf = rectangle_waveform(pw, args.duration, args.dt, post=2e-9)
        res = run_detector_batch(wf.power, wf.dt, cfg.detector,
                                 n_trials=args.trials, master_seed=args.seed,
                                 collect_formation_times=True)
        ivals = []
        for ft in res.formation_times:
            ft = ft[ft < args.duration]
            if len(ft) > 1:
                ivals.extend(np.diff(ft))
        mean = float(np.mean(ivals)) if ivals else math.nan
        rows.append((float(pw), mean, len(ivals),
                     int(res.latch_counts.sum())))
    write_csv(_outfile(args, "deadtime_intervals.csv"),
              ["power_W", "mean_interval_s", "n_intervals", "latch_events"],
              rows, meta=_meta(cfg, args))


def cmd_attack_eval(args) -> None:
    cfg = _load(args)
    iface0 = cfg.interferometer
    delta_t = args.delta_t if args.delta_t is not None else iface0.delta_t
    rows = []
    lines = []
    for er in _float_list(args.er_grid):
        for theta in _float_list(args.thresholds):
            iface = InterferometerParams(
                delta_t=delta_t, extinction_db=er,
                insertion_loss_db=iface0.insertion_loss_db)
            rp = cfg.readout.with_threshold(theta)
            diagram = build_deadtime_control_diagram(
                args.target, iface, cfg.detector, rp, repeat_count=args.repeat)
            rep = evaluate_attack(diagram, iface, cfg.detector, rp,
                                  args.trials, args.seed)
            rows.append((er, delta_t, rp.quantized_threshold,
                         rep.p_click_target, rep.p_click_target_stderr,
                         rep.p_click_wrong, rep.p_click_wrong_stderr,
                         rep.p_click_wrong_upper95, rep.double_click_rate,
                         rep.jitter_fwhm, rep.latch_events, rep.trials))
            lines.append(
                f"ER {er:5.1f} dB  threshold {rp.quantized_threshold * 1e3:6.2f} mV  "
                f"target {rep.p_click_target:.5f}  wrong {rep.p_click_wrong:.3e} "
                f"(95% UB {rep.p_click_wrong_upper95:.3e})  "
                f"jitter {rep.jitter_fwhm * 1e12:5.0f} ps  "
                f"latches {rep.latch_events}")
    write_csv(_outfile(args, "attack_sweep.csv"),
              ["er_db", "delta_t_s", "threshold_V", "p_click_target",
               "target_stderr", "p_click_wrong", "wrong_stderr",
               "wrong_wilson_upper95", "double_click_rate", "jitter_fwhm_s",
               "latch_events", "trials"], rows, meta=_meta(cfg, args))
    report = _outfile(args, "attack_report.txt")
    report.write_text("\n".join(lines) + "\n")


def cmd_qkd(args) -> None:
    cfg = _load(args)
    qc = cfg.qkd
    if args.bits is not None:
        qc = dataclasses.replace(qc, n_bits=args.bits)
    if args.protocol == "dps":
        qc = dataclasses.replace(qc, protocol=DPS)
        outcome = run_dps_attack(qc, cfg.interferometer, cfg.detector,
                                 cfg.readout, args.seed,
                                 attack=not args.no_attack)
    else:
        qc = dataclasses.replace(qc, protocol=BB84)
        outcome = run_bb84_latched_attack(qc, cfg.detector, cfg.readout,
                                          args.seed)
    write_csv(_outfile(args, "qkd_outcome.csv"),
              ["protocol", "er_db", "threshold_V", "sifted", "qber",
               "eve_fraction", "aborted"],
              [(outcome.protocol, cfg.interferometer.extinction_db,
                qc.threshold, outcome.sifted_bits, outcome.qber,
                outcome.eve_known_fraction, outcome.aborted)],
              meta=_meta(cfg, args))
    print(f"{outcome.protocol}: sifted {outcome.sifted_bits}/{outcome.n_bits}, "
          f"QBER {outcome.qber:.2e}, eve fraction "
          f"{outcome.eve_known_fraction:.4f}, aborted {outcome.aborted} "
          f"({outcome.notes})")


def cmd_emit_defaults(args) -> None:
    text = dump_config(Config())
    if args.out is None:
        sys.stdout.write(text)
        return
    path = Path(args.out)
    if path.exists() and not args.force:
        raise FileExistsError(f"{path} exists; pass --force to overwrite")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


_COMMANDS = {
    "trace": cmd_trace,
    "sweep-cw": cmd_sweep_cw,
    "sweep-threshold": cmd_sweep_threshold,
    "sweep-trigger": cmd_sweep_trigger,
    "deadtime": cmd_deadtime,
    "attack-eval": cmd_attack_eval,
    "qkd": cmd_qkd,
    "emit-defaults": cmd_emit_defaults,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except InfeasibleAttackError as exc:
        print(f"infeasible attack: {exc}", file=sys.stderr)
        return 3
    except (FileExistsError, FileNotFoundError, PermissionError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
