"""Doppler-domain path separation.

An observed channel series is decomposed into per-path (amplitude, Doppler,
phase) estimates by evaluating the z-transform of a Hann-windowed slice on a
zoomed frequency band, picking spectral peaks, and associating peaks across
a window that slides one TDD frame at a time.  Each window's estimates are
assigned to the frame at the window center.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import zoom_fft

from .channel import ChannelSeries, PathParams
from .cvnn import wrap_phase

DEFAULT_MAX_PATHS = 5
PEAK_THRESHOLD_RATIO = 1.0 / 20.0
ASSOCIATION_GATE_BINS = 3.0


@dataclass(frozen=True)
class CztConfig:
    """Zoom band and sizing for the sliding spectral estimation."""

    window_frames: int = 8
    analysis_rate_hz: float = 5e5
    freq_start: float = -100.0
    freq_end: float = 100.0
    n_bins: int = 201

    def __post_init__(self):
        if self.window_frames < 1:
            raise ValueError("window must cover at least one frame")
        if not self.freq_start < self.freq_end:
            raise ValueError("freq_start must be below freq_end")
        if self.n_bins < 8:
            raise ValueError("need at least 8 frequency bins")
        if self.analysis_rate_hz <= 0:
            raise ValueError("analysis rate must be positive")

    @property
    def bin_width_hz(self) -> float:
        return (self.freq_end - self.freq_start) / (self.n_bins - 1)

    def covers(self, max_doppler_hz: float) -> bool:
        return self.freq_start <= -max_doppler_hz and self.freq_end >= max_doppler_hz


@dataclass(frozen=True)
class SpectralPeak:
    """One local maximum of the zoomed spectrum."""

    freq_hz: float
    magnitude: float
    phase_at_peak: float


@dataclass
class PathTrack:
    """Per-frame history of one separated path."""

    track_id: int
    frames: list = field(default_factory=list)
    params: list = field(default_factory=list)   # PathParams, phase at t = 0
    values: list = field(default_factory=list)   # composed c_m at frame center

    def last_freq(self) -> float:
        return self.params[-1].doppler_hz

    def __len__(self):
        return len(self.frames)


def hann(n: int) -> np.ndarray:
    """Raised-cosine taper with zero endpoints; n = 1 gives [1]."""
    if n < 1:
        raise ValueError("window length must be >= 1")
    if n == 1:
        return np.ones(1)
    i = np.arange(n)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * i / (n - 1)))


def czt_spectrum(x, cfg: CztConfig):
    """Z-transform of x on n_bins points along the zoom band.

    Returns (spectrum, freqs); equals the DFT sum at each grid frequency,
    with phase referenced to the first sample of x.
    """
    x = np.asarray(x, dtype=complex)
    if x.size == 0:
        raise ValueError("empty input")
    spectrum = zoom_fft(x, [cfg.freq_start, cfg.freq_end], m=cfg.n_bins,
                        fs=cfg.analysis_rate_hz, endpoint=True)
    freqs = np.linspace(cfg.freq_start, cfg.freq_end, cfg.n_bins)
    return spectrum, freqs


def find_peaks(spectrum, freqs, max_paths: int = DEFAULT_MAX_PATHS,
               threshold_ratio: float = PEAK_THRESHOLD_RATIO):
    """Local maxima over 3-bin neighborhoods, greedy by magnitude.

    Band-edge bins count as peaks against their single neighbor.  Peaks
    below threshold_ratio of the global maximum are ignored.
    """
    mag = np.abs(np.asarray(spectrum))
    top = mag.max()
    if top <= 0.0:
        return []
    threshold = top * threshold_ratio

    candidates = []
    for i in range(len(mag)):
        left = mag[i - 1] if i > 0 else -1.0
        right = mag[i + 1] if i < len(mag) - 1 else -1.0
        if mag[i] >= threshold and mag[i] > left and mag[i] >= right:
            candidates.append(i)
    candidates.sort(key=lambda i: mag[i], reverse=True)

    peaks = []
    for i in candidates[:max_paths]:
        peaks.append(SpectralPeak(freq_hz=float(freqs[i]), magnitude=float(mag[i]),
                                  phase_at_peak=float(np.angle(spectrum[i]))))
    return peaks


def _window_estimates(x, cfg, max_paths, t_center_abs):
    """Paths (phase at absolute t=0) and composed center values for one window.

    Peak magnitudes are corrected by the Hann taper's coherent gain.  Peak
    phases are first referenced to the window center, where the taper's
    phase skew cancels even for off-bin frequencies, giving the composed
    center value; the stored phase offset is that center phase moved to
    absolute t = 0 so it composes directly with absolute sample times.
    """
    x = np.asarray(x, dtype=complex)
    if x.size == 0:
        raise ValueError("empty input")
    w = hann(len(x))
    spectrum, freqs = czt_spectrum(x * w, cfg)
    peaks = find_peaks(spectrum, freqs, max_paths)
    gain = float(np.sum(w))  # ~0.5 * len(x)
    t_center_rel = (len(x) - 1) / 2.0 / cfg.analysis_rate_hz

    out = []
    for pk in peaks:
        amp = pk.magnitude / gain
        phase_center = pk.phase_at_peak + 2.0 * np.pi * pk.freq_hz * t_center_rel
        value = amp * np.exp(1j * phase_center)
        phase_abs = float(wrap_phase(phase_center - 2.0 * np.pi * pk.freq_hz * t_center_abs))
        out.append((PathParams(amp, pk.freq_hz, phase_abs), complex(value)))
    return out


def estimate_paths(x, cfg: CztConfig, max_paths: int = DEFAULT_MAX_PATHS):
    """Estimate path parameters from one window, phases referenced to x[0]."""
    t_center = (np.asarray(x).size - 1) / 2.0 / cfg.analysis_rate_hz
    return [params for params, _ in _window_estimates(x, cfg, max_paths, t_center)]


def sliding_estimate(channel: ChannelSeries, tdd_frame_len: float,
                     cfg: CztConfig = CztConfig(),
                     max_paths: int = DEFAULT_MAX_PATHS):
    """Slide the analysis window one TDD frame at a time and track paths.

    Returns a list of PathTrack.  Estimates are associated to existing
    tracks by nearest frequency within a 3-bin gate; unmatched estimates
    start new tracks and a track missing for more than one frame closes.
    """
    if channel.sample_rate_hz > cfg.analysis_rate_hz:
        ratio = channel.sample_rate_hz / cfg.analysis_rate_hz
        factor = int(round(ratio))
        if abs(ratio - factor) > 1e-9:
            raise ValueError("sample rate must be an integer multiple of the analysis rate")
        channel = channel.block_average(factor)

    spf = int(round(tdd_frame_len * cfg.analysis_rate_hz))
    if spf < 1:
        raise ValueError("TDD frame shorter than one analysis sample")
    n_frames = len(channel.samples) // spf
    if n_frames < cfg.window_frames:
        raise ValueError(
            f"channel spans {n_frames} frames, need >= {cfg.window_frames}")

    window_len = cfg.window_frames * spf
    gate_hz = ASSOCIATION_GATE_BINS * cfg.bin_width_hz

    tracks: list[PathTrack] = []
    active: list[PathTrack] = []
    misses: dict[int, int] = {}
    next_id = 0

    for start_frame in range(n_frames - cfg.window_frames + 1):
        center_frame = start_frame + cfg.window_frames // 2
        lo = start_frame * spf
        x = channel.samples[lo:lo + window_len]
        t_center_abs = channel.t0 + (lo + (window_len - 1) / 2.0) / cfg.analysis_rate_hz
        estimates = _window_estimates(x, cfg, max_paths, t_center_abs)

        # Greedy nearest-frequency association, closest pairs first.
        pairs = []
        for ei, (params, _) in enumerate(estimates):
            for track in active:
                gap = abs(params.doppler_hz - track.last_freq())
                if gap <= gate_hz:
                    pairs.append((gap, ei, track))
        pairs.sort(key=lambda p: p[0])
        used_est, used_trk = set(), set()
        matches = {}
        for gap, ei, track in pairs:
            if ei in used_est or track.track_id in used_trk:
                continue
            used_est.add(ei)
            used_trk.add(track.track_id)
            matches[ei] = track

        survivors = []
        for ei, (params, value) in enumerate(estimates):
            track = matches.get(ei)
            if track is None:
                track = PathTrack(track_id=next_id)
                next_id += 1
                tracks.append(track)
            track.frames.append(center_frame)
            track.params.append(params)
            track.values.append(value)
            misses[track.track_id] = 0
            survivors.append(track)
        for track in active:
            if track.track_id not in used_trk:
                misses[track.track_id] = misses.get(track.track_id, 0) + 1
                if misses[track.track_id] <= 1:  # held one frame, then closed
                    survivors.append(track)
        active = survivors
    return tracks


def write_tracks_csv(path, tracks) -> None:
    """Rows: frame, track_id, a, f, phi, re(c), im(c)."""
    with open(path, "w") as fh:
        fh.write("frame,track_id,a,f,phi,re,im\n")
        rows = []
        for track in tracks:
            for frame, params, value in zip(track.frames, track.params, track.values):
                rows.append((frame, track.track_id, params.amplitude,
                             params.doppler_hz, params.phase_shift,
                             value.real, value.imag))
        rows.sort(key=lambda r: (r[0], r[1]))
        for frame, tid, a, f, phi, re, im in rows:
            fh.write(f"{frame},{tid},{float(a)!r},{float(f)!r},{float(phi)!r},"
                     f"{float(re)!r},{float(im)!r}\n")
