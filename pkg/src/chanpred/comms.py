"""CP-OFDM / QPSK link simulation over flat fading with channel compensation.

The fading channel is a time-varying scalar, so per-subcarrier equalization
collapses to dividing each demodulated symbol by the compensating channel
value.  Bit energy is accounted at the QPSK-symbol level with unit symbol
energy; orthonormal transforms keep the time-domain noise variance equal to
the per-bin noise variance, and the cyclic prefix is excluded from the
energy bookkeeping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .baselines import GruPredictor, ar_predict, linear_predict
from .channel import (
    PathParams,
    ScenarioGeometry,
    fixed_frame_paths,
    frame_slice,
    scenario_frame_paths,
    synthesize_frames,
)
from .cvnn import LearnConfig, NetworkShape
from .predictor import PredictorEngine
from .separation import CztConfig, sliding_estimate

ERASE_EPS = 1e-9


@dataclass(frozen=True)
class OfdmConfig:
    """CP-OFDM numerology; defaults fill one 0.512 ms TDD sub-frame exactly."""

    qpsk_symbols: int = 12852
    subcarriers: int = 2048
    guard_left: int = 106
    guard_right: int = 106
    ofdm_symbols: int = 7
    cp_lengths: tuple = (160, 144, 144, 144, 144, 144, 144)
    tdd_subframe_s: float = 0.000512
    symbols_per_subframe: int = 15360
    subframes_per_frame: int = 10
    sample_rate_hz: float = 3e7

    def __post_init__(self):
        if len(self.cp_lengths) != self.ofdm_symbols:
            raise ValueError("one cyclic-prefix length per OFDM symbol required")
        if self.occupied * self.ofdm_symbols < self.qpsk_symbols:
            raise ValueError("payload does not fit the OFDM grid minus guards")
        total = self.ofdm_symbols * self.subcarriers + sum(self.cp_lengths)
        if total != self.symbols_per_subframe:
            raise ValueError("OFDM grid does not fill the TDD sub-frame")

    @property
    def occupied(self) -> int:
        return self.subcarriers - self.guard_left - self.guard_right

    @property
    def bits_per_subframe(self) -> int:
        return 2 * self.qpsk_symbols

    @property
    def frame_len_s(self) -> float:
        return self.tdd_subframe_s * self.subframes_per_frame

    def symbol_data_spans(self):
        """(start, stop) sample offsets of each OFDM symbol's data part."""
        spans = []
        pos = 0
        for cp in self.cp_lengths:
            pos += cp
            spans.append((pos, pos + self.subcarriers))
            pos += self.subcarriers
        return spans


def qpsk_mod(bits) -> np.ndarray:
    """Gray map: bit pair (b0, b1) -> ((1-2*b0) + j(1-2*b1)) / sqrt(2)."""
    bits = np.asarray(bits, dtype=int).reshape(-1)
    if bits.size % 2:
        raise ValueError("bit count must be even")
    b = bits.reshape(-1, 2)
    return ((1 - 2 * b[:, 0]) + 1j * (1 - 2 * b[:, 1])) / math.sqrt(2)


def qpsk_demod(symbols) -> np.ndarray:
    """Minimum-distance slicing back to bits."""
    symbols = np.asarray(symbols, dtype=complex)
    bits = np.empty((symbols.size, 2), dtype=int)
    bits[:, 0] = symbols.real < 0
    bits[:, 1] = symbols.imag < 0
    return bits.reshape(-1)


def ofdm_mod(qpsk, cfg: OfdmConfig = OfdmConfig()) -> np.ndarray:
    """Fill the guarded grid, inverse-transform, prepend cyclic prefixes.

    A payload shorter than the grid capacity is zero-padded; longer
    payloads are rejected.
    """
    qpsk = np.asarray(qpsk, dtype=complex).reshape(-1)
    capacity = cfg.occupied * cfg.ofdm_symbols
    if qpsk.size > capacity:
        raise ValueError(f"payload of {qpsk.size} exceeds grid capacity {capacity}")
    padded = np.zeros(capacity, dtype=complex)
    padded[:qpsk.size] = qpsk

    out = np.empty(cfg.symbols_per_subframe, dtype=complex)
    pos = 0
    for s in range(cfg.ofdm_symbols):
        grid = np.zeros(cfg.subcarriers, dtype=complex)
        grid[cfg.guard_left:cfg.subcarriers - cfg.guard_right] = (
            padded[s * cfg.occupied:(s + 1) * cfg.occupied])
        x = np.fft.ifft(np.fft.ifftshift(grid), norm="ortho")
        cp = cfg.cp_lengths[s]
        out[pos:pos + cp] = x[-cp:]
        pos += cp
        out[pos:pos + cfg.subcarriers] = x
        pos += cfg.subcarriers
    return out


def ofdm_demod(samples, cfg: OfdmConfig = OfdmConfig()) -> np.ndarray:
    """Strip prefixes, forward-transform, extract the occupied bins."""
    samples = np.asarray(samples, dtype=complex).reshape(-1)
    if samples.size != cfg.symbols_per_subframe:
        raise ValueError("sample count does not match one sub-frame")
    out = np.empty(cfg.occupied * cfg.ofdm_symbols, dtype=complex)
    pos = 0
    for s in range(cfg.ofdm_symbols):
        pos += cfg.cp_lengths[s]
        x = samples[pos:pos + cfg.subcarriers]
        pos += cfg.subcarriers
        grid = np.fft.fftshift(np.fft.fft(x, norm="ortho"))
        out[s * cfg.occupied:(s + 1) * cfg.occupied] = (
            grid[cfg.guard_left:cfg.subcarriers - cfg.guard_right])
    return out


def compensate(rx_symbols, predicted_channel, erase_eps: float = ERASE_EPS):
    """Zero-forcing division by the predicted channel.

    Returns (symbols, erased) where `erased` flags symbols whose predicted
    amplitude fell below `erase_eps` (left undivided).
    """
    rx_symbols = np.asarray(rx_symbols, dtype=complex)
    predicted = np.broadcast_to(np.asarray(predicted_channel, dtype=complex),
                                rx_symbols.shape)
    erased = np.abs(predicted) < erase_eps
    safe = np.where(erased, 1.0, predicted)
    return rx_symbols / safe, erased


def ebn0_db_to_noise_power(ebn0_db: float) -> float:
    """Complex noise variance per sample for unit-energy QPSK symbols."""
    return 1.0 / (2.0 * 10.0 ** (ebn0_db / 10.0))


def qpsk_awgn_ber(ebn0_db: float) -> float:
    """Theoretical QPSK bit error rate on AWGN: Q(sqrt(2 Eb/N0))."""
    arg = math.sqrt(2.0 * 10.0 ** (ebn0_db / 10.0))
    return 0.5 * math.erfc(arg / math.sqrt(2.0))


def flat_fading_ber_bound(ebn0_db: float, channel_gains) -> float:
    """Matched-compensation BER bound: Q averaged over the gain samples."""
    lin = 10.0 ** (ebn0_db / 10.0)
    g = np.abs(np.asarray(channel_gains, dtype=complex))
    args = np.sqrt(2.0 * lin) * g
    return float(np.mean(0.5 * np.array([math.erfc(a / math.sqrt(2)) for a in args])))


@dataclass(frozen=True)
class BerResult:
    method: str
    ebn0_db: float
    bit_errors: int
    total_bits: int

    @property
    def ber(self) -> float:
        return self.bit_errors / self.total_bits

    def __post_init__(self):
        if self.total_bits <= 0:
            raise ValueError("total_bits must be positive")


def write_ber_csv(path, results) -> None:
    """Rows: method, ebn0_db, errors, bits, ber."""
    with open(path, "w") as fh:
        fh.write("method,ebn0_db,errors,bits,ber\n")
        for r in results:
            fh.write(f"{r.method},{float(r.ebn0_db)!r},{r.bit_errors},"
                     f"{r.total_bits},{float(r.ber)!r}\n")


def run_subframe(bits, channel_samples, comp_per_symbol, noise_power, rng,
                 cfg: OfdmConfig = OfdmConfig()):
    """Modulate, fade, add noise, compensate, demodulate; count bit errors.

    `comp_per_symbol` holds one compensating channel value per OFDM symbol;
    erased symbols (predicted amplitude ~ 0) count all their bits as errors.
    """
    tx = ofdm_mod(qpsk_mod(bits), cfg)
    noise = math.sqrt(noise_power / 2.0) * (
        rng.standard_normal(tx.size) + 1j * rng.standard_normal(tx.size))
    rx = np.asarray(channel_samples, dtype=complex) * tx + noise
    rx_syms = ofdm_demod(rx, cfg)

    comp = np.repeat(np.asarray(comp_per_symbol, dtype=complex), cfg.occupied)
    eq, erased = compensate(rx_syms, comp)
    n_syms = len(bits) // 2
    hat = qpsk_demod(eq[:n_syms])
    errors = int(np.sum(hat != np.asarray(bits)))
    # Count every bit of an erased payload symbol as wrong.
    erased_payload = erased[:n_syms]
    if erased_payload.any():
        pair_err = (hat.reshape(-1, 2) != np.asarray(bits).reshape(-1, 2))
        errors += int(np.sum(erased_payload) * 2 - pair_err[erased_payload].sum())
    return errors, len(bits)


class _MethodState:
    """Per-method online state and next-frame compensation values."""

    def __init__(self, name: str, shape: NetworkShape, learn: LearnConfig,
                 seed: int, amp_range, ar_order: int, gru_hidden: int,
                 gru_lr: float):
        self.name = name
        base = name.split(":", 1)[0]
        if base not in ("perfect", "none", "linear", "ar", "gru", "cvnn"):
            raise ValueError(f"unknown prediction method '{name}'")
        self.kind = base
        self.ar_order = ar_order
        if base == "cvnn":
            self.engine = PredictorEngine(shape, learn, seed=seed,
                                          amp_range=amp_range)
        if base == "gru":
            self.shape = shape
            self.gru_hidden = gru_hidden
            self.gru_lr = gru_lr
            self.gru_epochs = learn.iterations
            self.seed = seed
            self.tracks = {}
        if base in ("ar", "linear", "none"):
            self.histories = {}
            self.composite = []

    def observe(self, frame: int, estimates: dict):
        if self.kind == "cvnn":
            self.engine.update_frame(frame, {t: v for t, (v, _) in estimates.items()})
        elif self.kind == "gru":
            for tid, (value, _) in sorted(estimates.items()):
                if tid not in self.tracks:
                    self.tracks[tid] = GruPredictor(
                        self.shape.input_terminals, self.gru_hidden,
                        self.gru_lr, self.gru_epochs,
                        seed=np.random.SeedSequence([self.seed, tid]))
                self.tracks[tid].observe(value)
        elif self.kind in ("ar", "linear", "none"):
            for tid, (value, _) in estimates.items():
                self.histories.setdefault(tid, []).append(value)
            self.composite.append(sum(v for v, _ in estimates.values()))

    def comp_values(self, last_estimates: dict, sym_offsets, frame_len_s):
        """Compensation value per OFDM symbol across the predicted frame.

        `sym_offsets` are symbol-center times relative to the predicted
        frame's start; the prediction anchor sits one frame earlier for the
        held (no-prediction) mode and at the frame start for predictors.
        """
        if self.kind == "none":
            return np.full(len(sym_offsets), self.composite[-1], dtype=complex)
        if self.kind == "linear":
            if len(self.composite) < 2:
                return np.full(len(sym_offsets), self.composite[-1], dtype=complex)
            value = linear_predict(self.composite, 1)[0]
            return np.full(len(sym_offsets), value, dtype=complex)

        # Per-track predicted anchor values, extrapolated within the frame
        # by each track's last estimated Doppler.
        anchors = {}
        if self.kind == "cvnn":
            for tid, arr in self.engine.predict_tracks(1).items():
                anchors[tid] = arr[0]
        elif self.kind == "gru":
            for tid, pred in self.tracks.items():
                if pred.trained:
                    anchors[tid] = pred.predict(1)[0]
        elif self.kind == "ar":
            for tid, hist in self.histories.items():
                if len(hist) >= 2 * self.ar_order:
                    anchors[tid] = ar_predict(hist, self.ar_order, 1)[0]

        out = np.zeros(len(sym_offsets), dtype=complex)
        for tid, anchor in anchors.items():
            if tid not in last_estimates:
                continue
            doppler = last_estimates[tid][1]
            out += anchor * np.exp(2j * np.pi * doppler * np.asarray(sym_offsets))
        if not anchors:
            out[:] = 1.0  # nothing to predict from; pass symbols through
        return out


def _frame_estimate_table(tracks):
    """{frame: {track_id: (center value, doppler)}} from path tracks."""
    table = {}
    for tr in tracks:
        for frame, params, value in zip(tr.frames, tr.params, tr.values):
            table.setdefault(frame, {})[tr.track_id] = (value, params.doppler_hz)
    return table


def ber_curve(channel_spec, methods, ebn0_db_list, trials: int = 101,
              seed: int = 0, *, ofdm_cfg: OfdmConfig = OfdmConfig(),
              czt_cfg: CztConfig = CztConfig(),
              shape: NetworkShape = NetworkShape(),
              learn_cfgs: dict | None = None,
              amp_range=(0.05, 0.3), warmup_frames: int = 40,
              ar_order: int = 4, gru_hidden: int = 16, gru_lr: float = 0.01,
              max_paths: int = 5):
    """Monte-Carlo BER over the synthetic fading link, one curve per method.

    `channel_spec` is a ScenarioGeometry or an explicit PathParams list.
    Each trial transmits one full predicted TDD frame; bit errors accumulate
    over all trials.  All methods share the transmitted bits, channel and
    noise of each trial, so curves differ only through compensation.
    """
    if isinstance(methods, str):
        methods = [methods]
    learn_cfgs = learn_cfgs or {}
    frame_len = ofdm_cfg.frame_len_s
    win = czt_cfg.window_frames
    first_est = win // 2
    first_eval = first_est + shape.input_terminals + warmup_frames
    n_frames = first_eval + trials + win

    if isinstance(channel_spec, ScenarioGeometry):
        frames = scenario_frame_paths(channel_spec, frame_len, n_frames)
    else:
        frames = fixed_frame_paths(channel_spec, frame_len, n_frames)

    est_series = synthesize_frames(frames, frame_len, czt_cfg.analysis_rate_hz)
    table = _frame_estimate_table(
        sliding_estimate(est_series, frame_len, czt_cfg, max_paths))

    states = []
    for i, name in enumerate(methods):
        learn = learn_cfgs.get(name, LearnConfig())
        states.append(_MethodState(name, shape, learn,
                                   seed=seed + 1000 * i, amp_range=amp_range,
                                   ar_order=ar_order, gru_hidden=gru_hidden,
                                   gru_lr=gru_lr))

    spans = ofdm_cfg.symbol_data_spans()
    sym_centers_sub = np.array([(a + b) / 2.0 for a, b in spans]) / ofdm_cfg.sample_rate_hz
    sub_len = ofdm_cfg.symbols_per_subframe
    tau_sub = np.arange(sub_len) / ofdm_cfg.sample_rate_hz

    rng_bits = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    rng_noise = np.random.default_rng(np.random.SeedSequence([seed, 2]))

    errors = {(m, e): 0 for m in methods for e in ebn0_db_list}
    bits_total = {(m, e): 0 for m in methods for e in ebn0_db_list}

    eval_frames = range(first_eval, first_eval + trials)
    last_eval = max(eval_frames)
    for frame in range(first_est, last_eval + 1):
        estimates = table.get(frame, {})
        for st in states:
            if estimates:
                st.observe(frame, estimates)
        if frame not in eval_frames or not estimates:
            continue

        # Predict and transmit over frame + 1.
        target = frames[frame + 1]
        comp = {}
        for st in states:
            if st.kind == "perfect":
                continue
            per_sub = []
            for sf in range(ofdm_cfg.subframes_per_frame):
                offs = sf * ofdm_cfg.tdd_subframe_s + sym_centers_sub
                per_sub.append(st.comp_values(estimates, offs, frame_len))
            comp[st.name] = per_sub

        for sf in range(ofdm_cfg.subframes_per_frame):
            chan = frame_slice(target, sf * ofdm_cfg.tdd_subframe_s + tau_sub)
            bits = rng_bits.integers(0, 2, size=ofdm_cfg.bits_per_subframe)
            tx = ofdm_mod(qpsk_mod(bits), ofdm_cfg)
            # Mean channel over each symbol's data span: the perfect-CSI
            # compensator and the reference for erased handling.
            perfect_vals = np.array([chan[a:b].mean() for a, b in spans])
            for ebn0 in ebn0_db_list:
                noise_power = ebn0_db_to_noise_power(ebn0)
                noise = math.sqrt(noise_power / 2.0) * (
                    rng_noise.standard_normal(sub_len)
                    + 1j * rng_noise.standard_normal(sub_len))
                rx_syms = ofdm_demod(chan * tx + noise, ofdm_cfg)
                for st in states:
                    vals = perfect_vals if st.kind == "perfect" else comp[st.name][sf]
                    eq, erased = compensate(
                        rx_syms, np.repeat(vals, ofdm_cfg.occupied))
                    hat = qpsk_demod(eq[:ofdm_cfg.qpsk_symbols])
                    err = int(np.sum(hat != bits))
                    if erased[:ofdm_cfg.qpsk_symbols].any():
                        pairs = (hat.reshape(-1, 2) != bits.reshape(-1, 2))
                        er = erased[:ofdm_cfg.qpsk_symbols]
                        err += int(er.sum() * 2 - pairs[er].sum())
                    errors[(st.name, ebn0)] += err
                    bits_total[(st.name, ebn0)] += len(bits)

    return [BerResult(m, e, errors[(m, e)], bits_total[(m, e)])
            for m in methods for e in ebn0_db_list]
