import dataclasses
import math

import numpy as np
import pytest

import snspdsim as ss
from snspdsim.qkd import BB84, DPS


@pytest.fixture(scope="module")
def iface():
    return ss.InterferometerParams(delta_t=5e-9, extinction_db=20.0)


class TestComputeQber:
    def test_identical(self):
        assert ss.compute_qber([0, 1, 0], [0, 1, 0], [1, 1, 1]) == 0.0

    def test_complementary(self):
        assert ss.compute_qber([0, 1, 0], [1, 0, 1], [1, 1, 1]) == 1.0

    def test_three_bit_example(self):
        # Sift keeps positions 1 and 3 (1-based); one of the two mismatches.
        alice = [0, 1, 1]
        bob = [0, 0, 0]
        assert ss.compute_qber(alice, bob, [True, False, True]) == 0.5

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            ss.compute_qber([0, 1], [0, 1, 1], [1, 1, 1])

    def test_empty_sift_flagged(self):
        with pytest.warns(UserWarning, match="empty sift"):
            assert ss.compute_qber([0, 1], [1, 0], [False, False]) == 0.0


class TestDpsBaseline:
    def test_transparent_eavesdropper(self, params, readout, iface):
        cfg = ss.ProtocolConfig(protocol=DPS, n_bits=200000)
        out = ss.run_dps_attack(cfg, iface, params, readout, seed=5,
                                attack=False)
        assert out.eve_known_fraction == 0.0
        assert out.qber < 1e-3
        assert not out.aborted

    def test_dark_count_floor_is_below_threshold(self, params):
        # Analytic floor of the baseline error rate at default rates.
        p_sig = -math.expm1(-params.eta * params.coupling * 0.2)
        p_dark = -math.expm1(-params.dark_rate * 10e-9)
        floor = p_dark / (p_sig + p_dark)
        assert floor < 1e-3


class TestDpsAttack:
    def test_full_control_run(self, params, readout, iface):
        cfg = ss.ProtocolConfig(protocol=DPS, n_bits=1500)
        out = ss.run_dps_attack(cfg, iface, params, readout, seed=6)
        assert out.sifted_bits >= 0.98 * cfg.n_bits
        assert out.qber < 1e-2
        assert out.eve_known_fraction > 0.995
        assert not out.aborted
        assert out.detector_rates[0] + out.detector_rates[1] == pytest.approx(
            out.sifted_bits / cfg.n_bits, rel=1e-9)

    def test_poor_extinction_still_below_abort(self, params, readout):
        ifp = ss.InterferometerParams(delta_t=5e-9, extinction_db=10.0)
        cfg = ss.ProtocolConfig(protocol=DPS, n_bits=1500)
        out = ss.run_dps_attack(cfg, ifp, params, readout, seed=7)
        assert out.qber <= 0.02
        assert not out.aborted
        assert out.eve_known_fraction > 0.97

    def test_seed_determinism(self, params, readout, iface):
        cfg = ss.ProtocolConfig(protocol=DPS, n_bits=300)
        a = ss.run_dps_attack(cfg, iface, params, readout, seed=8)
        b = ss.run_dps_attack(cfg, iface, params, readout, seed=8)
        assert a == b

    def test_delay_mismatch_rejected(self, params, readout):
        ifp = ss.InterferometerParams(delta_t=2e-9)
        cfg = ss.ProtocolConfig(protocol=DPS, n_bits=10, delta_t=5e-9)
        with pytest.raises(ValueError, match="delta_t"):
            ss.run_dps_attack(cfg, ifp, params, readout, seed=1)

    def test_wrong_protocol_rejected(self, params, readout, iface):
        cfg = ss.ProtocolConfig(protocol=BB84, n_bits=10)
        with pytest.raises(ValueError):
            ss.run_dps_attack(cfg, iface, params, readout, seed=1)


class TestBb84Attack:
    def test_full_key_capture(self, params, readout):
        cfg = ss.ProtocolConfig(protocol=BB84, n_bits=4000, threshold=10e-3)
        out = ss.run_bb84_latched_attack(cfg, params, readout, seed=11)
        assert out.qber < 0.01
        assert out.eve_known_fraction == pytest.approx(1.0)
        assert not out.aborted
        # Sifted fraction: basis match (1/2) times click condition (1/2).
        assert out.sifted_bits == pytest.approx(cfg.n_bits / 4, rel=0.15)

    def test_high_threshold_collapses_rate(self, params, readout):
        cfg = ss.ProtocolConfig(protocol=BB84, n_bits=1000, threshold=25e-3)
        out = ss.run_bb84_latched_attack(cfg, params, readout, seed=12)
        assert out.sifted_bits == 0
        assert out.detector_rates == (0.0, 0.0)
        assert out.empty_sift
        assert not out.aborted

    def test_zero_bits(self, params, readout):
        cfg = ss.ProtocolConfig(protocol=BB84, n_bits=0, threshold=10e-3)
        out = ss.run_bb84_latched_attack(cfg, params, readout, seed=13)
        assert out.sifted_bits == 0
        assert out.empty_sift

    def test_seed_determinism(self, params, readout):
        cfg = ss.ProtocolConfig(protocol=BB84, n_bits=500, threshold=10e-3)
        a = ss.run_bb84_latched_attack(cfg, params, readout, seed=14)
        b = ss.run_bb84_latched_attack(cfg, params, readout, seed=14)
        assert a == b


class TestOutcomeInvariants:
    def test_abort_consistency(self, params, readout, iface):
        cfg = ss.ProtocolConfig(protocol=DPS, n_bits=400)
        out = ss.run_dps_attack(cfg, iface, params, readout, seed=15)
        assert out.aborted == (out.qber > cfg.qber_abort_threshold)
        assert 0.0 <= out.qber <= 1.0
        assert 0.0 <= out.eve_known_fraction <= 1.0

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ss.ProtocolConfig(protocol="E91")
        with pytest.raises(ValueError):
            ss.ProtocolConfig(mu=0.0)
        with pytest.raises(ValueError):
            ss.ProtocolConfig(qber_abort_threshold=1.5)
