"""Multipath fading-channel synthesis and application.

A channel is a sum of complex paths, each a rotating phasor with fixed
amplitude, Doppler shift and phase offset.  Paths can be given explicitly
or derived from a 2-d scene (base station, moving user, scatterers) whose
geometry is re-evaluated once per TDD frame with continuous phase chaining
across frame boundaries.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .cvnn import wrap_phase

LIGHT_SPEED = 2.99792458e8


class GeometryError(ValueError):
    """Mobile user coincides with the base station or a scatterer."""


@dataclass(frozen=True)
class PathParams:
    """One multipath component: amplitude, Doppler shift, phase offset."""

    amplitude: float
    doppler_hz: float
    phase_shift: float

    def __post_init__(self):
        if not np.isfinite([self.amplitude, self.doppler_hz, self.phase_shift]).all():
            raise ValueError("path parameters must be finite")
        if self.amplitude < 0:
            raise ValueError("path amplitude must be non-negative")

    def value_at(self, t):
        """Complex path value a * exp(j(2 pi f t + phi)) at time(s) t."""
        t = np.asarray(t, dtype=float)
        return self.amplitude * np.exp(
            1j * (2.0 * np.pi * self.doppler_hz * t + self.phase_shift))


@dataclass(frozen=True)
class ScenarioGeometry:
    """Base station, moving user and scatterers in a 2-d plane (meters)."""

    bs_position: tuple = (0.0, 0.0)
    mu_position_initial: tuple = (100.0, 0.0)
    mu_speed: float = 12.0
    mu_heading: float = -np.pi / 6
    scatterer_positions: tuple = ((80.0, 15.0), (80.0, 25.0))
    carrier_hz: float = 2.0e9
    delta_x: float = 10.0
    light_speed: float = LIGHT_SPEED

    def __post_init__(self):
        if self.mu_speed < 0:
            raise ValueError("mobile-user speed must be non-negative")
        if self.carrier_hz <= 0 or self.light_speed <= 0:
            raise ValueError("carrier frequency and light speed must be positive")

    @property
    def max_doppler_hz(self) -> float:
        return self.carrier_hz / self.light_speed * self.mu_speed

    def mu_position(self, t: float) -> np.ndarray:
        head = np.array([np.cos(self.mu_heading), np.sin(self.mu_heading)])
        return np.asarray(self.mu_position_initial, dtype=float) + self.mu_speed * t * head


def default_scenario(delta_x: float = 10.0, **overrides) -> ScenarioGeometry:
    """Standard two-scatterer scene, scatterers separated by delta_x meters.

    The scatterers sit to the side of the receding user so all three path
    Dopplers land within roughly ten hertz of each other: the paths
    interfere into one slowly beating composite whose beat structure, and
    hence prediction difficulty, is set by delta_x.
    """
    base = np.array([80.0, 15.0])
    scatterers = (tuple(base), tuple(base + [0.0, delta_x]))
    return ScenarioGeometry(scatterer_positions=scatterers, delta_x=delta_x,
                            **overrides)


@dataclass
class ChannelSeries:
    """Uniformly sampled complex channel states."""

    samples: np.ndarray
    sample_rate_hz: float
    t0: float = 0.0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=complex)
        if self.samples.ndim != 1:
            raise ValueError("channel samples must be a 1-d array")
        if not np.all(np.isfinite(self.samples.view(float))):
            raise ValueError("channel samples must be finite")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample rate must be positive")

    def __len__(self):
        return len(self.samples)

    def times(self) -> np.ndarray:
        return self.t0 + np.arange(len(self.samples)) / self.sample_rate_hz

    def block_average(self, factor: int) -> "ChannelSeries":
        """Down-sample by averaging non-overlapping blocks of `factor` samples.

        The averaged value is stamped at the block start; trailing samples
        that do not fill a block are dropped.
        """
        if factor < 1:
            raise ValueError("factor must be >= 1")
        if factor == 1:
            return ChannelSeries(self.samples.copy(), self.sample_rate_hz, self.t0)
        n = (len(self.samples) // factor) * factor
        blocks = self.samples[:n].reshape(-1, factor).mean(axis=1)
        return ChannelSeries(blocks, self.sample_rate_hz / factor, self.t0)


def doppler_frequency(carrier_hz: float, speed: float, psi: float,
                      light_speed: float = LIGHT_SPEED) -> float:
    """Doppler shift (f_c / c) * v * cos(psi) for arrival angle psi."""
    if speed < 0:
        raise ValueError("speed must be non-negative")
    if light_speed <= 0:
        raise ValueError("light speed must be positive")
    return carrier_hz / light_speed * speed * np.cos(psi)


def synthesize(paths, times) -> ChannelSeries:
    """Sum the given paths over a uniform time grid."""
    paths = list(paths)
    if not paths:
        raise ValueError("need at least one path")
    times = np.asarray(times, dtype=float)
    if times.size < 1:
        raise ValueError("need at least one sample time")
    if times.size > 1:
        dt = np.diff(times)
        if not np.allclose(dt, dt[0], rtol=1e-9, atol=0.0):
            raise ValueError("sample times must be uniform")
        rate = 1.0 / dt[0]
    else:
        rate = 1.0
    total = np.zeros(times.shape, dtype=complex)
    for p in paths:
        total += p.value_at(times)
    return ChannelSeries(total, rate, t0=float(times[0]))


def _path_geometry(scenario: ScenarioGeometry, t: float):
    """Per-path (arrival angle psi, total path length) at time t."""
    mu = scenario.mu_position(t)
    bs = np.asarray(scenario.bs_position, dtype=float)
    head = np.array([np.cos(scenario.mu_heading), np.sin(scenario.mu_heading)])

    los_vec = bs - mu
    los_len = float(np.linalg.norm(los_vec))
    if los_len < 1e-9:
        raise GeometryError("mobile user coincides with the base station")
    entries = [(float(np.arccos(np.clip(head @ (los_vec / los_len), -1, 1))), los_len)]

    for s in scenario.scatterer_positions:
        s = np.asarray(s, dtype=float)
        leg = s - mu
        leg_len = float(np.linalg.norm(leg))
        if leg_len < 1e-9:
            raise GeometryError("mobile user coincides with a scatterer")
        total_len = float(np.linalg.norm(s - bs)) + leg_len
        psi = float(np.arccos(np.clip(head @ (leg / leg_len), -1, 1)))
        entries.append((psi, total_len))
    return entries


def geometry_to_paths(scenario: ScenarioGeometry, t: float = 0.0):
    """Path parameters (line of sight first, then one per scatterer) at time t.

    Amplitudes: line of sight 1, scattered paths 1 / (path length relative
    to the line of sight, floored at 1); all normalized to unit total.
    Phase offsets: -2 pi (path length) / wavelength, wrapped.
    """
    entries = _path_geometry(scenario, t)
    wavelength = scenario.light_speed / scenario.carrier_hz
    los_len = entries[0][1]

    raw_amp = [1.0] + [1.0 / max(length / los_len, 1.0) for _, length in entries[1:]]
    total = sum(raw_amp)
    paths = []
    for (psi, length), amp in zip(entries, raw_amp):
        f = doppler_frequency(scenario.carrier_hz, scenario.mu_speed, psi,
                              scenario.light_speed)
        phi = float(wrap_phase(-2.0 * np.pi * length / wavelength))
        paths.append(PathParams(amp / total, f, phi))
    return paths


def scenario_frame_paths(scenario: ScenarioGeometry, frame_len_s: float,
                         n_frames: int, t0: float = 0.0):
    """Quasi-static per-frame path parameters with chained phases.

    Geometry is re-evaluated at every frame boundary; within a frame each
    path keeps the amplitude and Doppler found at the frame start, and the
    returned phase offsets are the accumulated phases AT the frame start so
    the composite channel is continuous across boundaries.
    """
    if n_frames < 1:
        raise ValueError("need at least one frame")
    first = geometry_to_paths(scenario, t0)
    phases = np.array([p.phase_shift for p in first])
    frames = []
    for i in range(n_frames):
        paths = geometry_to_paths(scenario, t0 + i * frame_len_s)
        frames.append([PathParams(p.amplitude, p.doppler_hz, float(wrap_phase(ph)))
                       for p, ph in zip(paths, phases)])
        phases = phases + 2 * np.pi * np.array([p.doppler_hz for p in paths]) * frame_len_s
    return frames


def fixed_frame_paths(paths, frame_len_s: float, n_frames: int, t0: float = 0.0):
    """Per-frame view of a fixed path set: phases advanced to frame starts."""
    paths = list(paths)
    if not paths:
        raise ValueError("need at least one path")
    frames = []
    for i in range(n_frames):
        t_frame = t0 + i * frame_len_s
        frames.append([
            PathParams(p.amplitude, p.doppler_hz,
                       float(wrap_phase(p.phase_shift + 2 * np.pi * p.doppler_hz * t_frame)))
            for p in paths])
    return frames


def frame_slice(frame_paths, offsets_s) -> np.ndarray:
    """Channel samples of one frame at time offsets from the frame start."""
    offsets_s = np.asarray(offsets_s, dtype=float)
    total = np.zeros(offsets_s.shape, dtype=complex)
    for p in frame_paths:
        total += p.value_at(offsets_s)
    return total


def synthesize_frames(frames, frame_len_s: float, sample_rate_hz: float,
                      t0: float = 0.0) -> ChannelSeries:
    """Concatenate per-frame path parameters into one uniform series."""
    spf = int(round(frame_len_s * sample_rate_hz))
    if spf < 1:
        raise ValueError("frame shorter than one sample")
    tau = np.arange(spf) / sample_rate_hz
    out = np.empty(len(frames) * spf, dtype=complex)
    for i, frame in enumerate(frames):
        out[i * spf:(i + 1) * spf] = frame_slice(frame, tau)
    return ChannelSeries(out, sample_rate_hz, t0=t0)


def synthesize_scenario(scenario: ScenarioGeometry, frame_len_s: float,
                        n_frames: int, sample_rate_hz: float,
                        t0: float = 0.0) -> ChannelSeries:
    """Quasi-static synthesis of the scene over n_frames TDD frames."""
    frames = scenario_frame_paths(scenario, frame_len_s, n_frames, t0)
    return synthesize_frames(frames, frame_len_s, sample_rate_hz, t0=t0)


def apply_channel(signal, channel: ChannelSeries, noise_power: float,
                  rng) -> np.ndarray:
    """Multiply a transmit signal by the channel and add complex white noise.

    `noise_power` is the total complex noise variance; each real component
    gets half of it.  `rng` is a numpy Generator or a seed.
    """
    signal = np.asarray(signal, dtype=complex)
    if signal.shape != channel.samples.shape:
        raise ValueError("signal and channel lengths differ")
    if noise_power < 0:
        raise ValueError("noise power must be non-negative")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    noise = np.sqrt(noise_power / 2.0) * (
        rng.standard_normal(signal.shape) + 1j * rng.standard_normal(signal.shape))
    return channel.samples * signal + noise


def write_channel_csv(path, series: ChannelSeries) -> None:
    """Write (t, re, im) rows with a header line."""
    t = series.times()
    with open(path, "w") as fh:
        fh.write("t,re,im\n")
        for ti, ci in zip(t, series.samples):
            fh.write(f"{float(ti)!r},{float(ci.real)!r},{float(ci.imag)!r}\n")


def read_channel_csv(path) -> ChannelSeries:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    t, re, im = data[:, 0], data[:, 1], data[:, 2]
    if len(t) > 1:
        rate = 1.0 / (t[1] - t[0])
    else:
        rate = 1.0
    return ChannelSeries(re + 1j * im, rate, t0=float(t[0]))


def write_channel_bin(path, series: ChannelSeries) -> None:
    """Compact binary layout: little-endian f64 (t, re, im) triples."""
    t = series.times()
    with open(path, "wb") as fh:
        for ti, ci in zip(t, series.samples):
            fh.write(struct.pack("<3d", ti, ci.real, ci.imag))


def read_channel_bin(path) -> ChannelSeries:
    raw = np.fromfile(path, dtype="<f8")
    if raw.size % 3:
        raise ValueError("truncated channel file")
    triples = raw.reshape(-1, 3)
    t = triples[:, 0]
    rate = 1.0 / (t[1] - t[0]) if len(t) > 1 else 1.0
    return ChannelSeries(triples[:, 1] + 1j * triples[:, 2], rate, t0=float(t[0]))
