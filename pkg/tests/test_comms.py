"""Unit tests for the OFDM/QPSK link and BER harness."""

import math

import numpy as np
import pytest

from chanpred.channel import PathParams
from chanpred.comms import (
    BerResult,
    OfdmConfig,
    ber_curve,
    compensate,
    ebn0_db_to_noise_power,
    flat_fading_ber_bound,
    ofdm_demod,
    ofdm_mod,
    qpsk_awgn_ber,
    qpsk_demod,
    qpsk_mod,
    run_subframe,
    write_ber_csv,
)


class TestQpsk:
    def test_gray_map_anchor(self):
        sym = qpsk_mod([0, 0])
        assert sym[0] == pytest.approx((1 + 1j) / math.sqrt(2))

    def test_round_trip(self):
        rng = np.random.default_rng(0)
        bits = rng.integers(0, 2, size=4096)
        assert np.array_equal(qpsk_demod(qpsk_mod(bits)), bits)

    def test_small_rotation_still_slices(self):
        rng = np.random.default_rng(1)
        bits = rng.integers(0, 2, size=1024)
        rotated = qpsk_mod(bits) * np.exp(0.1j)
        assert np.array_equal(qpsk_demod(rotated), bits)

    def test_odd_bit_count_rejected(self):
        with pytest.raises(ValueError):
            qpsk_mod([0, 1, 0])

    def test_awgn_only_ber_matches_theory(self):
        ebn0_db = 8.0
        n_bits = 2_000_000
        rng = np.random.default_rng(42)
        bits = rng.integers(0, 2, size=n_bits)
        tx = qpsk_mod(bits)
        sigma2 = ebn0_db_to_noise_power(ebn0_db)
        noise = math.sqrt(sigma2 / 2) * (rng.standard_normal(tx.size)
                                         + 1j * rng.standard_normal(tx.size))
        ber = np.mean(qpsk_demod(tx + noise) != bits)
        assert ber == pytest.approx(qpsk_awgn_ber(ebn0_db), rel=0.2)


class TestOfdm:
    def test_round_trip_identity(self):
        cfg = OfdmConfig()
        rng = np.random.default_rng(2)
        payload = qpsk_mod(rng.integers(0, 2, size=cfg.bits_per_subframe))
        rx = ofdm_demod(ofdm_mod(payload, cfg), cfg)
        assert np.max(np.abs(rx[:payload.size] - payload)) < 1e-9

    def test_constant_channel_scales_every_symbol(self):
        cfg = OfdmConfig()
        rng = np.random.default_rng(3)
        payload = qpsk_mod(rng.integers(0, 2, size=cfg.bits_per_subframe))
        g = 0.8 * np.exp(1j * 0.6)
        rx = ofdm_demod(g * ofdm_mod(payload, cfg), cfg)
        assert np.allclose(rx[:payload.size], g * payload, atol=1e-9)

    def test_guard_bins_carry_no_energy(self):
        cfg = OfdmConfig()
        rng = np.random.default_rng(4)
        payload = qpsk_mod(rng.integers(0, 2, size=cfg.bits_per_subframe))
        tx = ofdm_mod(payload, cfg)
        pos = 0
        for s in range(cfg.ofdm_symbols):
            pos += cfg.cp_lengths[s]
            grid = np.fft.fftshift(np.fft.fft(tx[pos:pos + cfg.subcarriers],
                                              norm="ortho"))
            pos += cfg.subcarriers
            assert np.max(np.abs(grid[:cfg.guard_left])) < 1e-12
            assert np.max(np.abs(grid[cfg.subcarriers - cfg.guard_right:])) < 1e-12

    def test_payload_overflow_rejected(self):
        cfg = OfdmConfig()
        with pytest.raises(ValueError):
            ofdm_mod(np.zeros(cfg.occupied * cfg.ofdm_symbols + 1, dtype=complex), cfg)

    def test_table_consistency(self):
        cfg = OfdmConfig()
        assert cfg.occupied == 1836
        assert cfg.occupied * cfg.ofdm_symbols == cfg.qpsk_symbols
        assert cfg.frame_len_s == pytest.approx(0.00512)


class TestCompensate:
    def test_truth_compensation_recovers_symbols(self):
        rng = np.random.default_rng(5)
        s = qpsk_mod(rng.integers(0, 2, size=256))
        c = 0.5 * np.exp(1j * rng.uniform(-np.pi, np.pi, size=s.size))
        eq, erased = compensate(s * c, c)
        assert not erased.any()
        assert np.allclose(eq, s, atol=1e-12)

    def test_pi_phase_error_flips_all_bits(self):
        rng = np.random.default_rng(6)
        bits = rng.integers(0, 2, size=512)
        s = qpsk_mod(bits)
        c = np.exp(1j * 0.3)
        eq, _ = compensate(s * c, c * np.exp(1j * np.pi))
        assert np.array_equal(qpsk_demod(eq), 1 - bits)

    def test_tiny_prediction_flagged_erased(self):
        eq, erased = compensate(np.array([1 + 1j, 1 - 1j]),
                                np.array([1e-12, 1.0]))
        assert erased.tolist() == [True, False]


class TestLinkHelpers:
    def test_noiseless_compensated_subframe_error_free(self):
        cfg = OfdmConfig()
        rng = np.random.default_rng(7)
        bits = rng.integers(0, 2, size=cfg.bits_per_subframe)
        g = 0.9 * np.exp(0.4j)
        chan = np.full(cfg.symbols_per_subframe, g)
        errors, total = run_subframe(bits, chan, np.full(cfg.ofdm_symbols, g),
                                     0.0, rng, cfg)
        assert errors == 0 and total == cfg.bits_per_subframe

    def test_ofdm_chain_ber_matches_theory(self):
        # Full modem over a unit channel: validates the Eb/N0 bookkeeping.
        cfg = OfdmConfig()
        ebn0_db = 6.0
        rng = np.random.default_rng(8)
        chan = np.ones(cfg.symbols_per_subframe, dtype=complex)
        comp = np.ones(cfg.ofdm_symbols, dtype=complex)
        errors = total = 0
        noise_power = ebn0_db_to_noise_power(ebn0_db)
        while total < 1_200_000:
            bits = rng.integers(0, 2, size=cfg.bits_per_subframe)
            e, n = run_subframe(bits, chan, comp, noise_power, rng, cfg)
            errors += e
            total += n
        assert errors / total == pytest.approx(qpsk_awgn_ber(ebn0_db), rel=0.2)

    def test_flat_fading_bound_reduces_to_awgn(self):
        assert flat_fading_ber_bound(8.0, np.ones(10)) == pytest.approx(
            qpsk_awgn_ber(8.0), rel=1e-12)


class TestBerResult:
    def test_ratio(self):
        r = BerResult("perfect", 8.0, 19, 100000)
        assert r.ber == pytest.approx(1.9e-4)

    def test_csv(self, tmp_path):
        path = tmp_path / "ber.csv"
        write_ber_csv(path, [BerResult("none", 4.0, 10, 1000)])
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "method,ebn0_db,errors,bits,ber"
        assert lines[1].startswith("none,4.0,10,1000,")


class TestBerCurve:
    def test_static_channel_none_equals_perfect(self):
        results = ber_curve([PathParams(0.9, 0.0, 0.4)], ["perfect", "none"],
                            [8.0], trials=1, seed=3, warmup_frames=2)
        by_method = {r.method: r for r in results}
        assert by_method["none"].bit_errors == by_method["perfect"].bit_errors
        assert by_method["none"].total_bits == by_method["perfect"].total_bits
