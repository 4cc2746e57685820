"""Trial-parallel detector simulation.

One engine drives everything from single traces to million-trial attack
sweeps. Trials are vectorized with numpy; every trial owns a private random
stream keyed by (master_seed, trial_index, component), so results are
bit-identical no matter how trials are chunked or scheduled. Each trial
consumes exactly two uniforms per sample (event decision, auxiliary), which
keeps the scalar state machine in :mod:`snspdsim.physics` and this engine
statistically interchangeable.

The readout chain (one-pole high-pass and low-pass, gain, splitter loss,
threshold comparator with minimum dwell) runs inside the sample loop so click
statistics never require materializing per-trial traces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .params import R_LOAD, BiasSource, DetectorParams
from .physics import (DARK_COUNT, HOTSPOT_FORMED, LATCH_ENTERED, ElectricalTrace,
                      EventRecord, MAX_STEP, latched_steady_current, quiet_time,
                      trigger_e50, trigger_slope)
from .waveform import OpticalWaveform

_MAX_TABLE_ROWS = 2048
_CHUNK_BYTES = 3e8


def trial_generator(master_seed: int, trial: int, component: int = 0) -> np.random.Generator:
    """Private random stream for one trial of one simulated component."""
    ss = np.random.SeedSequence(entropy=int(master_seed),
                                spawn_key=(int(trial), int(component)))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass
class BatchResult:
    """Per-trial summaries from a batch run."""

    n_trials: int
    dt: float
    window_counts: np.ndarray        # (n_trials, n_windows) clicks per window
    window_first: np.ndarray         # (n_trials, n_windows) first click start, nan
    stray_counts: np.ndarray         # clicks outside every window
    stray_first: np.ndarray
    first_click: np.ndarray
    click_counts: np.ndarray
    formation_counts: np.ndarray
    latch_counts: np.ndarray
    latch_times: np.ndarray
    i_latched: np.ndarray            # drawn latched current, nan if never latched
    events: list = None              # list per trial when recorded
    clicks: list = None              # click leading-edge times when recorded
    formation_times: list = None     # array per trial when collected
    v_pre: np.ndarray = None         # (n_trials, n) when traces recorded
    v_post: np.ndarray = None


def _resolve_chunk(n_trials: int, n_samples: int, requested: int) -> int:
    by_mem = max(1, int(_CHUNK_BYTES / (16.0 * max(n_samples, 1))))
    return max(1, min(requested, by_mem, n_trials))


def run_detector_batch(
    power: np.ndarray,
    dt: float,
    params: DetectorParams,
    readout=None,
    *,
    n_trials: int,
    master_seed: int,
    component: int = 0,
    v_bias: float = 0.1,
    start_latched: bool = False,
    i_latched_init=None,
    windows=(),
    trial_ids=None,
    record_trace: bool = False,
    record_events: bool = False,
    record_clicks: bool = False,
    collect_formation_times: bool = False,
    chunk: int = 4096,
) -> BatchResult:
    """Run ``n_trials`` independent detector trials over one power waveform.

    ``windows`` is a sequence of (start_s, end_s) intervals used to classify
    click leading edges; clicks outside every window count as strays. The
    comparator runs only when ``readout`` is given. ``trial_ids`` remaps the
    random-stream key of each trial (defaults to 0..n_trials-1), so a subset
    of a larger ensemble keeps its original streams.
    """
    power = np.asarray(power, dtype=float)
    n = len(power)
    if dt <= 0 or dt > MAX_STEP:
        raise ValueError(f"dt must be in (0, {MAX_STEP}]")
    if not np.all(np.isfinite(power)) or np.any(power < 0):
        raise ValueError("power must be finite and nonnegative")
    if n_trials < 1:
        raise ValueError("n_trials must be at least 1")
    if record_trace and n_trials > 64:
        raise ValueError("trace recording is limited to small batches")
    if trial_ids is None:
        trial_ids = np.arange(n_trials)
    else:
        trial_ids = np.asarray(trial_ids, dtype=np.int64)
        if len(trial_ids) != n_trials:
            raise ValueError("trial_ids length must equal n_trials")

    i_b = params.i_b
    i_reset = params.i_reset
    i_thr = params.recovery_threshold_frac * i_b

    # Recovery current lookup; the tail past quiet_time snaps to i_b exactly.
    n_cap = max(1, int(round(quiet_time(params) / dt)))
    nn = np.arange(n_cap + 1)
    i_tab = i_b * (1.0 - (1.0 - params.f_reset) * np.exp(-nn * dt / params.tau_rec))
    i_tab[-1] = i_b
    n_full = int(np.searchsorted(i_tab >= i_thr, True))

    # Sensitivity tables on the recovery-index axis.
    table_max_delay = params.sens_e50_table[-1][0]
    n_tab = min(n_cap, max(n_full, int(round(table_max_delay / dt))))
    dly = np.minimum(np.arange(n_tab + 1) * dt, table_max_delay)
    e50_tab = trigger_e50(dly, params)
    slope_tab = trigger_slope(dly, params)

    # Energy in the trailing integration window, per sample.
    n_w = max(1, int(round(params.sens_window / dt)))
    w_eff = n_w * dt
    e_win = np.convolve(power, np.ones(n_w))[:n] * dt

    # Poisson channels (single photon + dark) while fully recovered.
    lam_pd = (params.eta * params.coupling * power / params.photon_energy
              + params.dark_rate) * dt

    # Per-sample hazard rows over unique (window energy, power) pairs.
    pairs = np.ascontiguousarray(np.stack([e_win, lam_pd], axis=1))
    uq, rid = np.unique(pairs.view([("e", "f8"), ("l", "f8")]).ravel(),
                        return_inverse=True)
    table_mode = len(uq) <= _MAX_TABLE_ROWS
    if table_mode:
        ue = uq["e"][:, None]
        with np.errstate(divide="ignore", over="ignore"):
            r = np.where(ue > 0, ue / e50_tab[None, :], 0.0) ** slope_tab[None, :]
            p_hot = np.where(np.isfinite(r), r / (1.0 + r), 1.0)
        lam_hot_tab = -np.log1p(-np.minimum(p_hot, 1 - 1e-12)) * (dt / w_eff)
        lam_tot = lam_hot_tab + (nn[None, : n_tab + 1] >= n_full) * uq["l"][:, None]
        q_tab = -np.expm1(-lam_tot)
        hot_frac_tab = np.divide(lam_hot_tab, lam_tot,
                                 out=np.ones_like(lam_tot), where=lam_tot > 0)

    # Latched-branch constants.
    a_th = 1.0 - math.exp(-dt / params.thermal_tau)
    from .physics import _latched_slope
    lat_slope = _latched_slope(v_bias, params)

    # Readout chain constants.
    if readout is not None:
        readout.validate_dt(dt)
        a_hp = 1.0 - math.exp(-dt * 2.0 * math.pi * readout.hp_cutoff)
        a_lp = 1.0 - math.exp(-dt * 2.0 * math.pi * readout.lp_cutoff)
        post_gain = readout.net_voltage_gain
        theta = readout.quantized_threshold
        dwell_n = max(1, int(round(readout.min_dwell / dt)))
    win = [(int(round(a / dt)), int(round(b / dt))) for a, b in windows]
    n_win = len(win)

    n_hold = max(1, int(round(params.t_hotspot / dt)))
    cool_fac = math.exp(-dt / params.latch_cool_time)
    c_lat = params.t_form_latency
    sig0 = params.t_jitter_sigma
    gam = params.t_jitter_exponent

    out = BatchResult(
        n_trials=n_trials, dt=dt,
        window_counts=np.zeros((n_trials, n_win), dtype=np.int64),
        window_first=np.full((n_trials, n_win), np.nan),
        stray_counts=np.zeros(n_trials, dtype=np.int64),
        stray_first=np.full(n_trials, np.nan),
        first_click=np.full(n_trials, np.nan),
        click_counts=np.zeros(n_trials, dtype=np.int64),
        formation_counts=np.zeros(n_trials, dtype=np.int64),
        latch_counts=np.zeros(n_trials, dtype=np.int64),
        latch_times=np.full(n_trials, np.nan),
        i_latched=np.full(n_trials, np.nan),
    )
    if record_events:
        out.events = [[] for _ in range(n_trials)]
    if record_clicks:
        out.clicks = [[] for _ in range(n_trials)]
    if collect_formation_times:
        out.formation_times = [[] for _ in range(n_trials)]
    if record_trace:
        out.v_pre = np.zeros((n_trials, n))
        out.v_post = np.zeros((n_trials, n)) if readout is not None else None

    chunk = _resolve_chunk(n_trials, n, chunk)
    for lo in range(0, n_trials, chunk):
        hi = min(lo + chunk, n_trials)
        m = hi - lo
        u = np.empty((m, 2, n))
        for i in range(m):
            u[i] = trial_generator(master_seed, trial_ids[lo + i],
                                   component).random((2, n))

        n_idx = np.full(m, n_cap, dtype=np.int64)
        hold = np.zeros(m, dtype=np.int64)
        fuse = np.zeros(m, dtype=np.int64)
        heat = np.zeros(m)
        latched = np.zeros(m, dtype=bool)
        i_dark = np.full(m, params.i_latched_nominal)
        i_th = np.full(m, params.i_latched_nominal)
        if start_latched:
            latched[:] = True
            if i_latched_init is not None:
                i_dark[:] = i_latched_init
                i_th[:] = i_latched_init
            out.i_latched[lo:hi] = i_dark
        s_hp = np.zeros(m)
        y_lp = np.zeros(m)
        run_len = np.zeros(m, dtype=np.int64)

        for k in range(n):
            u0 = u[:, 0, k]
            u1 = u[:, 1, k]
            pk = power[k]

            # Phase A: observe current, output voltage, comparator.
            i_now = i_tab[np.minimum(n_idx, n_cap)]
            i_now = np.where(hold > 0, i_reset, i_now)
            if latched.any():
                i_ss = v_bias / (v_bias / i_dark + lat_slope * pk)
                i_th = np.where(latched, i_th + (i_ss - i_th) * a_th, i_th)
                v_pre = np.where(latched, (i_dark - i_th) * R_LOAD,
                                 (i_b - i_now) * R_LOAD)
            else:
                v_pre = (i_b - i_now) * R_LOAD
            if record_trace:
                out.v_pre[lo:hi, k] = v_pre
            if readout is not None:
                s_hp += a_hp * (v_pre - s_hp)
                y_lp += a_lp * ((v_pre - s_hp) - y_lp)
                v_post = y_lp * post_gain
                if record_trace and out.v_post is not None:
                    out.v_post[lo:hi, k] = v_post
                above = v_post >= theta
                run_len = np.where(above, run_len + 1, 0)
                new_click = run_len == dwell_n
                if new_click.any():
                    idx = np.flatnonzero(new_click)
                    k0 = k - dwell_n + 1
                    t0 = k0 * dt
                    out.click_counts[lo + idx] += 1
                    fc = out.first_click[lo + idx]
                    out.first_click[lo + idx] = np.where(np.isnan(fc), t0, fc)
                    if record_clicks:
                        for i in idx:
                            out.clicks[lo + i].append(t0)
                    placed = np.zeros(len(idx), dtype=bool)
                    for wi, (ks, ke) in enumerate(win):
                        if ks <= k0 < ke:
                            out.window_counts[lo + idx, wi] += 1
                            fw = out.window_first[lo + idx, wi]
                            out.window_first[lo + idx, wi] = np.where(
                                np.isnan(fw), t0, fw)
                            placed[:] = True
                    if not placed.all():
                        sid = idx[~placed]
                        out.stray_counts[lo + sid] += 1
                        fs = out.stray_first[lo + sid]
                        out.stray_first[lo + sid] = np.where(np.isnan(fs), t0, fs)

            # Phase B: stochastic trigger channels.
            active = (~latched) & (hold == 0) & (fuse == 0)
            if active.any():
                nc = np.minimum(n_idx, n_tab)
                if table_mode:
                    q = q_tab[rid[k], nc]
                else:
                    e50 = e50_tab[nc]
                    sl = slope_tab[nc]
                    if e_win[k] > 0:
                        r = (e_win[k] / e50) ** sl
                        p_hot = r / (1.0 + r)
                    else:
                        p_hot = np.zeros(m)
                    lam = (-np.log1p(-np.minimum(p_hot, 1 - 1e-12)) * (dt / w_eff)
                           + (nc >= n_full) * lam_pd[k])
                    q = -np.expm1(-lam)
                ev = active & (u0 < q)
                if ev.any():
                    idx = np.flatnonzero(ev)
                    sig = sig0 * (i_b / np.maximum(i_now[idx], i_reset)) ** gam
                    d = sig * ndtri(np.clip(u1[idx], 1e-12, 1 - 1e-12))
                    d = np.clip(d, -c_lat, c_lat)
                    fuse[idx] = np.maximum(
                        1, np.rint((c_lat + d) / dt)).astype(np.int64)
                    out.formation_counts[lo + idx] += 1
                    if collect_formation_times:
                        for i in idx:
                            out.formation_times[lo + i].append(k * dt)
                    if record_events:
                        if table_mode:
                            hf = hot_frac_tab[rid[k], nc[idx]]
                        else:
                            lam_hot = -np.log1p(
                                -np.minimum(p_hot[idx], 1 - 1e-12)) * (dt / w_eff)
                            tot = lam_hot + (nc[idx] >= n_full) * lam_pd[k]
                            hf = np.divide(lam_hot, tot,
                                           out=np.ones_like(tot), where=tot > 0)
                        dark_frac = (1.0 - hf) * params.dark_rate * dt / np.maximum(
                            lam_pd[k], 1e-300)
                        ratio = u0[idx] / q[idx]
                        for j, i in enumerate(idx):
                            kind = (DARK_COUNT
                                    if ratio[j] > 1.0 - dark_frac[j]
                                    else HOTSPOT_FORMED)
                            out.events[lo + i].append(EventRecord(kind, k * dt))

            # Phase C: advance clocks.
            fusing = fuse > 0
            formed = fusing & (fuse == 1)
            fuse = np.where(fusing, fuse - 1, 0)
            holding = (~formed) & (hold > 0)
            hold = np.where(holding, hold - 1, hold)
            reset_now = holding & (hold == 0)
            n_idx = np.where(reset_now, 0, n_idx)
            hold = np.where(formed, n_hold, hold)
            adv = (~latched) & (~formed) & (~reset_now) & (hold == 0)
            n_idx = np.where(adv, np.minimum(n_idx + 1, n_cap), n_idx)

            # Phase D: thermal accumulator and latch rule.
            if not latched.all():
                i_post = np.where(hold > 0, i_reset, i_tab[np.minimum(n_idx, n_cap)])
                recovered = (hold == 0) & (i_post >= i_thr)
                heat = np.where(latched, heat,
                                np.where(recovered, heat * cool_fac, heat + dt))
                newly = (~latched) & (heat >= params.latch_hold_time)
                if newly.any():
                    idx = np.flatnonzero(newly)
                    latched[idx] = True
                    draw = (params.i_latched_nominal
                            + (2.0 * u1[idx] - 1.0) * params.i_latched_jitter)
                    i_dark[idx] = draw
                    i_th[idx] = draw
                    fuse[idx] = 0
                    hold[idx] = 0
                    out.latch_counts[lo + idx] += 1
                    out.latch_times[lo + idx] = k * dt
                    out.i_latched[lo + idx] = draw
                    if record_events:
                        for i in idx:
                            out.events[lo + i].append(
                                EventRecord(LATCH_ENTERED, k * dt))

    if collect_formation_times:
        out.formation_times = [np.asarray(t) for t in out.formation_times]
    return out


def simulate_trace(params: DetectorParams, bias: BiasSource,
                   waveform: OpticalWaveform, seed: int,
                   trial: int = 0, component: int = 0) -> ElectricalTrace:
    """Single-trial simulation returning the pre-amplifier trace and events."""
    res = run_detector_batch(
        waveform.power, waveform.dt, params,
        n_trials=1, master_seed=seed, component=component,
        v_bias=bias.v_open, trial_ids=np.array([trial]),
        record_trace=True, record_events=True)
    return ElectricalTrace(waveform.dt, res.v_pre[0], res.events[0])
