import dataclasses
import math

import numpy as np
import pytest

import snspdsim as ss
from snspdsim.attack import build_deadtime_control_diagram, evaluate_attack


@pytest.fixture(scope="module")
def iface20():
    return ss.InterferometerParams(delta_t=5e-9, extinction_db=20.0)


@pytest.fixture(scope="module")
def rp116(readout):
    return readout.with_threshold(11.6e-3)


@pytest.fixture(scope="module")
def diagram20(iface20, params, rp116):
    return build_deadtime_control_diagram("D0", iface20, params, rp116)


class TestLatchDevice:
    def test_dim_cw_latches_reliably(self, params, readout):
        out = ss.latch_device(50e-9, 5e-3, params=params, readout=readout,
                              threshold=20e-3, seed=1)
        assert out.latched
        assert out.latch_time < 5e-3
        assert 6e-6 <= out.i_latched <= 8e-6

    def test_bright_cw_latches_with_few_clicks(self, params, readout):
        out = ss.latch_device(5e-3, 3e-3, params=params, readout=readout,
                              threshold=20e-3, seed=2)
        assert out.latched
        assert out.spurious_clicks < 10

    def test_dark_input_never_latches(self, params, readout):
        out = ss.latch_device(0.0, 5e-3, params=params, readout=readout,
                              threshold=20e-3, seed=3)
        assert not out.latched
        assert math.isnan(out.latch_time)

    def test_agrees_with_sampled_engine_on_bright_cw(self, params, readout):
        # Cross-check the event-driven path against the sampled engine on a
        # short bright exposure where both are tractable.
        fast = params.with_(latch_hold_time=100e-9, latch_cool_time=1e-6)
        out = ss.latch_device(2e-3, 2e-6, params=fast, readout=readout,
                              threshold=20e-3, seed=4)
        wf = ss.rectangle_waveform(2e-3, 400e-9, 50e-12)
        res = ss.run_detector_batch(wf.power, wf.dt, fast, n_trials=16,
                                    master_seed=4)
        assert out.latched
        assert np.all(res.latch_counts == 1)
        assert out.latch_time == pytest.approx(np.mean(res.latch_times), rel=0.3)


class TestLatchedAttack:
    def test_trigger_power_window_respects_3db_rule(self, params, readout):
        state0 = ss.make_latched(params)
        for theta in (5e-3, 8e-3, 11.6e-3, 16e-3, 20e-3):
            power = ss.latched_trigger_power(theta, params, readout)
            full = ss.build_latched_attack(power, basis_match=True)
            half = ss.build_latched_attack(power, basis_match=False)
            p_full, _ = ss.click_probability(full, state0, theta, 100, 1,
                                             params=params, readout=readout)
            p_half, _ = ss.click_probability(half, state0, theta, 100, 1,
                                             params=params, readout=readout)
            assert p_full >= 0.99, f"theta {theta}"
            assert p_half <= 0.01, f"theta {theta}"

    def test_zero_power_trigger_never_clicks(self, params, readout):
        state0 = ss.make_latched(params)
        wf = ss.build_latched_attack(0.0)
        p, _ = ss.click_probability(wf, state0, 5e-3, 100, 1,
                                    params=params, readout=readout)
        assert p == 0.0

    def test_threshold_above_saturation_is_infeasible(self, params, readout):
        with pytest.raises(ss.InfeasibleAttackError):
            ss.latched_trigger_power(25e-3, params, readout)


class TestDiagramBuilder:
    def test_default_geometry(self, diagram20, params, rp116):
        # Readout fires only after the target's trace has decayed below
        # threshold; steering pulses precede it with three-deep coverage.
        v_plateau = ((1 - params.f_reset) * params.i_b * 50.0
                     * rp116.net_voltage_gain)
        t_fall = params.tau_rec * math.log(v_plateau / 11.6e-3)
        assert diagram20.readout_time > t_fall
        assert len(diagram20.steering) >= 3
        assert diagram20.long_power == pytest.approx(2e-3)
        assert diagram20.long_duration == pytest.approx(53e-9)
        times = [t for _, t in diagram20.steering]
        assert all(t < diagram20.readout_time for t in times)
        assert sum(1 for t in times
                   if t + t_fall >= diagram20.readout_time) >= 3

    def test_secondary_interface_shapes(self, diagram20):
        pulses = diagram20.short_pulses
        assert pulses[-1][2] == "BOTH"
        assert all(route == "D1" for _, _, route in pulses[:-1])
        rows = diagram20.segments()
        assert rows[0][4] == "long"
        assert rows[-1][4] == "readout"

    def test_duration_cap_rejected(self, iface20, params, rp116):
        with pytest.raises(ss.InfeasibleAttackError, match="500"):
            build_deadtime_control_diagram("D0", iface20, params, rp116,
                                           repeat_count=6)
        diag5 = build_deadtime_control_diagram("D0", iface20, params, rp116,
                                               repeat_count=5)
        assert diag5.total_duration <= ss.MAX_CONTROL_DURATION

    def test_poor_extinction_rejected(self, params, rp116):
        bad = ss.InterferometerParams(delta_t=5e-9, extinction_db=5.0)
        with pytest.raises(ss.InfeasibleAttackError, match="budget"):
            build_deadtime_control_diagram("D0", bad, params, rp116)

    def test_threshold_above_plateau_rejected(self, iface20, params, readout):
        with pytest.raises(ss.InfeasibleAttackError, match="plateau"):
            build_deadtime_control_diagram("D0", iface20, params,
                                           readout.with_threshold(60e-3))

    def test_insertion_loss_compensated(self, params, rp116, iface20):
        lossy = dataclasses.replace(iface20, insertion_loss_db=3.0)
        d_lossy = build_deadtime_control_diagram("D0", lossy, params, rp116)
        d_clean = build_deadtime_control_diagram("D0", iface20, params, rp116)
        ratio = d_lossy.readout_energy / d_clean.readout_energy
        assert ratio == pytest.approx(10 ** 0.3, rel=1e-6)


class TestEvaluateAttack:
    def test_nominal_control_fidelity(self, diagram20, iface20, params, rp116):
        rep = evaluate_attack(diagram20, iface20, params, rp116,
                              n_trials=4000, seed=42)
        assert rep.p_click_target >= 0.99
        assert rep.p_click_wrong <= 2e-3
        assert rep.double_click_rate >= 0.99
        assert rep.latch_events == 0
        assert rep.sufficient_stats
        assert rep.jitter_fwhm == pytest.approx(250e-12, rel=0.4)

    def test_wrong_click_probability_grows_at_poor_extinction(
            self, params, rp116):
        ifp = ss.InterferometerParams(delta_t=5e-9, extinction_db=10.0)
        diag = build_deadtime_control_diagram("D0", ifp, params, rp116)
        rep = evaluate_attack(diag, ifp, params, rp116, n_trials=6000, seed=43)
        assert rep.p_click_wrong < 1e-2
        assert rep.p_click_target >= 0.99

    def test_steering_disabled_degrades_control(self, diagram20, iface20,
                                                params, rp116):
        # Without the hold pulses both detectors recover and the readout
        # clicks either one.
        stripped = dataclasses.replace(diagram20, steering=())
        rep = evaluate_attack(stripped, iface20, params, rp116,
                              n_trials=400, seed=44)
        assert rep.p_click_wrong > 0.1

    def test_all_zero_diagram(self, iface20, params, rp116):
        silent = ss.ControlDiagram(target="D0", long_power=0.0,
                                   long_duration=53e-9, steering=(),
                                   readout_energy=0.0, readout_time=24e-9)
        rep = evaluate_attack(silent, iface20, params, rp116,
                              n_trials=300, seed=45)
        assert rep.p_click_target == 0.0
        assert rep.p_click_wrong == 0.0
        assert rep.double_click_rate == 0.0

    def test_target_symmetry(self, iface20, params, rp116):
        diag1 = build_deadtime_control_diagram("D1", iface20, params, rp116)
        rep = evaluate_attack(diag1, iface20, params, rp116,
                              n_trials=2000, seed=46)
        assert rep.p_click_target >= 0.99
        assert rep.p_click_wrong <= 2e-3

    def test_chained_diagram_clicks_every_repetition(self, iface20, params,
                                                     rp116):
        diag = build_deadtime_control_diagram("D0", iface20, params, rp116,
                                              repeat_count=4)
        rep = evaluate_attack(diag, iface20, params, rp116,
                              n_trials=800, seed=47)
        assert rep.p_click_target >= 0.99
        assert rep.latch_events == 0

    def test_deterministic_per_seed(self, diagram20, iface20, params, rp116):
        a = evaluate_attack(diagram20, iface20, params, rp116,
                            n_trials=500, seed=48)
        b = evaluate_attack(diagram20, iface20, params, rp116,
                            n_trials=500, seed=48, chunk=97)
        assert a == b


def test_wilson_upper_bound():
    assert ss.wilson_upper(0, 10 ** 6) < 5e-6
    assert ss.wilson_upper(0, 100) < 0.05
    assert 0.4 < ss.wilson_upper(50, 100) < 0.62
    assert ss.wilson_upper(100, 100) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        ss.wilson_upper(0, 0)
