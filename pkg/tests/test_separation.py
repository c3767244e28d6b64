"""Unit tests for Doppler-domain path separation."""

import numpy as np
import pytest

from chanpred.channel import ChannelSeries, PathParams, synthesize
from chanpred.cvnn import wrap_phase
from chanpred.separation import (
    CztConfig,
    PathTrack,
    czt_spectrum,
    estimate_paths,
    find_peaks,
    hann,
    sliding_estimate,
    write_tracks_csv,
)

FRAME_S = 0.00512  # one TDD frame (10 sub-frames of 0.512 ms)


def dft_on_grid(x, freqs, fs):
    """Brute-force DFT evaluated at arbitrary frequencies (oracle)."""
    x = np.asarray(x, dtype=complex)
    n = np.arange(len(x))
    return np.array([np.sum(x * np.exp(-2j * np.pi * f * n / fs)) for f in freqs])


def tone(n, fs, f, amp=1.0, phi=0.0):
    t = np.arange(n) / fs
    return amp * np.exp(1j * (2 * np.pi * f * t + phi))


class TestHann:
    def test_three_points(self):
        assert np.allclose(hann(3), [0.0, 1.0, 0.0])

    def test_four_points(self):
        assert np.allclose(hann(4), [0.0, 0.75, 0.75, 0.0])

    def test_single_point(self):
        assert np.array_equal(hann(1), [1.0])

    def test_symmetry_and_bound(self):
        for n in (5, 8, 33, 256):
            w = hann(n)
            assert np.allclose(w, w[::-1])
            assert w.max() <= 1.0 and w.min() >= 0.0


class TestCztSpectrum:
    @pytest.mark.parametrize("n", [3, 17, 256, 1000, 4096])
    def test_matches_direct_dft(self, n):
        rng = np.random.default_rng(n)
        x = rng.normal(size=n) + 1j * rng.normal(size=n)
        cfg = CztConfig(analysis_rate_hz=1e4, freq_start=-320.0, freq_end=480.0,
                        n_bins=65)
        spec, freqs = czt_spectrum(x, cfg)
        oracle = dft_on_grid(x, freqs, cfg.analysis_rate_hz)
        assert np.max(np.abs(spec - oracle)) < 1e-9

    def test_tone_peaks_at_nearest_bin(self):
        fs, f0 = 1e4, 37.3
        cfg = CztConfig(analysis_rate_hz=fs, freq_start=-100, freq_end=100,
                        n_bins=201)
        spec, freqs = czt_spectrum(tone(8192, fs, f0), cfg)
        peak_f = freqs[np.argmax(np.abs(spec))]
        assert abs(peak_f - f0) <= cfg.bin_width_hz

    def test_constant_peaks_at_zero(self):
        cfg = CztConfig(analysis_rate_hz=1e4, freq_start=-50, freq_end=50,
                        n_bins=101)
        spec, freqs = czt_spectrum(np.ones(4096, dtype=complex), cfg)
        assert freqs[np.argmax(np.abs(spec))] == pytest.approx(0.0)

    def test_empty_input_rejected(self):
        with pytest.raises(ValueError):
            czt_spectrum(np.array([]), CztConfig())

    def test_parseval_within_band(self):
        fs = 1e4
        cfg = CztConfig(analysis_rate_hz=fs, freq_start=-200, freq_end=200,
                        n_bins=801)
        x = tone(4096, fs, 35.0, amp=1.3, phi=0.4) * hann(4096)
        spec, freqs = czt_spectrum(x, cfg)
        df = cfg.bin_width_hz
        band_energy = np.sum(np.abs(spec) ** 2) * df / fs
        sig_energy = np.sum(np.abs(x) ** 2)
        assert band_energy == pytest.approx(sig_energy, rel=0.05)


class TestFindPeaks:
    def test_threshold_excludes_small_bumps(self):
        spec = np.zeros(50, dtype=complex)
        spec[10] = 10.0
        spec[30] = 0.4  # below max/20
        peaks = find_peaks(spec, np.arange(50.0))
        assert [p.freq_hz for p in peaks] == [10.0]

    def test_greedy_ordering_and_cap(self):
        spec = np.zeros(60, dtype=complex)
        for i, m in ((5, 3.0), (20, 9.0), (40, 6.0), (55, 1.0)):
            spec[i] = m
        peaks = find_peaks(spec, np.arange(60.0), max_paths=2)
        assert [p.freq_hz for p in peaks] == [20.0, 40.0]

    def test_all_zero_returns_empty(self):
        assert find_peaks(np.zeros(16, dtype=complex), np.arange(16.0)) == []


class TestEstimatePaths:
    def setup_method(self):
        self.cfg = CztConfig()
        self.n = int(self.cfg.window_frames * FRAME_S * self.cfg.analysis_rate_hz)

    def test_single_path_round_trip(self):
        true = PathParams(1.0, 40.0, np.pi / 6)
        x = tone(self.n, self.cfg.analysis_rate_hz, true.doppler_hz,
                 true.amplitude, true.phase_shift)
        (est,) = estimate_paths(x, self.cfg, max_paths=3)
        assert est.amplitude == pytest.approx(true.amplitude, rel=0.02)
        assert abs(est.doppler_hz - true.doppler_hz) <= self.cfg.bin_width_hz
        assert abs(wrap_phase(est.phase_shift - true.phase_shift)) < 0.05

    def test_two_separated_paths(self):
        fs = self.cfg.analysis_rate_hz
        x = tone(self.n, fs, 40.0, 1.0, 0.2) + tone(self.n, fs, -40.0, 0.6, -1.0)
        ests = estimate_paths(x, self.cfg, max_paths=4)
        freqs = sorted(e.doppler_hz for e in ests[:2])
        assert abs(freqs[0] + 40.0) <= self.cfg.bin_width_hz
        assert abs(freqs[1] - 40.0) <= self.cfg.bin_width_hz

    def test_zero_input_gives_empty(self):
        assert estimate_paths(np.zeros(self.n, dtype=complex), self.cfg) == []


class TestSlidingEstimate:
    def make_channel(self, paths, n_frames, fs=5e5):
        spf = int(FRAME_S * fs)
        t = np.arange(n_frames * spf) / fs
        return synthesize(paths, t)

    def test_stationary_two_tone_tracks(self):
        paths = [PathParams(1.0, 60.0, 0.5), PathParams(0.7, -60.0, -0.3)]
        chan = self.make_channel(paths, 20)
        tracks = sliding_estimate(chan, FRAME_S)
        long_tracks = [tr for tr in tracks if len(tr) >= 10]
        assert len(long_tracks) == 2
        for tr in long_tracks:
            freqs = np.array([p.doppler_hz for p in tr.params])
            assert np.ptp(freqs) <= CztConfig().bin_width_hz

    def test_constant_channel_single_track(self):
        chan = self.make_channel([PathParams(0.8, 0.0, 1.1)], 16)
        tracks = sliding_estimate(chan, FRAME_S)
        assert len(tracks) == 1
        track = tracks[0]
        true_value = 0.8 * np.exp(1.1j)
        for v in track.values:
            assert abs(v - true_value) <= 0.02 * abs(true_value)

    def test_round_trip_recomposition(self):
        paths = [PathParams(1.0, 60.0, 0.9), PathParams(0.7, -60.0, 2.0)]
        fs = 5e5
        chan = self.make_channel(paths, 24, fs)
        tracks = sliding_estimate(chan, FRAME_S)

        spf = int(FRAME_S * fs)
        window = CztConfig().window_frames * spf
        recomposed = {}
        for tr in tracks:
            for frame, value in zip(tr.frames, tr.values):
                recomposed[frame] = recomposed.get(frame, 0.0) + value
        err = []
        ref = []
        for frame, est in recomposed.items():
            start = (frame - CztConfig().window_frames // 2) * spf
            t_center = (start + (window - 1) / 2.0) / fs
            truth = sum(p.value_at(t_center) for p in paths)
            err.append(abs(est - truth) ** 2)
            ref.append(abs(truth) ** 2)
        rel_rms = np.sqrt(np.sum(err) / np.sum(ref))
        assert rel_rms < 0.03

    def test_short_channel_rejected(self):
        chan = self.make_channel([PathParams(1.0, 0.0, 0.0)], 4)
        with pytest.raises(ValueError):
            sliding_estimate(chan, FRAME_S)

    def test_downsampling_path(self):
        fs_hi = 3e6  # 6x the analysis rate
        spf = int(FRAME_S * fs_hi)
        t = np.arange(12 * spf) / fs_hi
        chan = synthesize([PathParams(1.0, 30.0, 0.0)], t)
        tracks = sliding_estimate(chan, FRAME_S)
        assert len(tracks) >= 1
        assert abs(tracks[0].params[0].doppler_hz - 30.0) <= CztConfig().bin_width_hz

    def test_tracks_csv(self, tmp_path):
        chan = self.make_channel([PathParams(1.0, 40.0, 0.0)], 12)
        tracks = sliding_estimate(chan, FRAME_S)
        out = tmp_path / "tracks.csv"
        write_tracks_csv(out, tracks)
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "frame,track_id,a,f,phi,re,im"
        assert len(lines) == 1 + sum(len(tr) for tr in tracks)
