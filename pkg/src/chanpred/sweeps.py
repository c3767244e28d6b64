"""Scenario sweep experiments: network size and prediction stability vs penalty.

One sweep cell runs an online prediction pass over the two-scatterer scene
and reports the mean effective network size and the worst accumulated
phase error of its predicted frames.  Trials are independently seeded
passes starting at staggered time points along the user's movement; path
estimation is shared across penalty settings since it does not depend on
the learner.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .channel import default_scenario, frame_slice, scenario_frame_paths, synthesize_frames
from .cvnn import LearnConfig, NetworkShape, PENALTY_L1, PENALTY_NONE
from .predictor import PredictorEngine, accumulated_phase_error
from .separation import CztConfig, sliding_estimate
from .comms import OfdmConfig

PHASE_ERROR_POINTS = 64  # per-frame sampling of the phase-error metric


@dataclass(frozen=True)
class SweepSettings:
    """Desk-scale defaults; the full protocol raises trials and the grid."""

    delta_x_list: tuple = (0.5, 5.0, 10.0, 20.0)
    alpha_list: tuple = (0.0, 1e-4, 5e-4, 1e-3, 2e-2)
    penalties: tuple = ("l1", "l21")
    trials: int = 20
    seed: int = 0
    shape: NetworkShape = NetworkShape()
    kappa1: float = 0.2
    kappa2: float = 0.1
    iterations: int = 10
    amp_range: tuple = (0.05, 0.3)
    # 5 Hz bins: the 3-bin association gate must cover the frequency wander
    # of the default scene's merged-path spectral centroid.
    czt: CztConfig = CztConfig(n_bins=41)
    frame_len_s: float = OfdmConfig().frame_len_s
    warmup_frames: int = 70
    eval_frames: int = 12
    trial_stride: int = 3
    max_paths: int = 5

    def learn_config(self, penalty: str, alpha: float) -> LearnConfig:
        mode = PENALTY_NONE if alpha == 0.0 else penalty
        return LearnConfig(kappa1=self.kappa1, kappa2=self.kappa2, alpha=alpha,
                           iterations=self.iterations, penalty_mode=mode)

    @property
    def pass_frames(self) -> int:
        # window margin + history fill + warmup + evaluated predictions
        return (self.czt.window_frames + self.shape.input_terminals
                + self.warmup_frames + self.eval_frames + 2)


@dataclass
class PassResult:
    """One online pass: per-frame network sizes and per-prediction errors."""

    ratios: list = field(default_factory=list)        # trained frames only
    phase_errors: list = field(default_factory=list)  # one per predicted frame

    @property
    def mean_ratio(self) -> float:
        return float(np.mean(self.ratios)) if self.ratios else 0.0

    @property
    def max_phase_error(self) -> float:
        return float(np.max(self.phase_errors)) if self.phase_errors else 0.0


def frame_estimate_table(tracks) -> dict:
    """{frame: {track_id: (center value, doppler)}} from path tracks."""
    table: dict = {}
    for tr in tracks:
        for frame, params, value in zip(tr.frames, tr.params, tr.values):
            table.setdefault(frame, {})[tr.track_id] = (value, params.doppler_hz)
    return table


def scenario_estimates(delta_x: float, n_frames: int, settings: SweepSettings):
    """Synthesize the scene and run the sliding path estimation once."""
    scenario = default_scenario(delta_x)
    frames = scenario_frame_paths(scenario, settings.frame_len_s, n_frames)
    series = synthesize_frames(frames, settings.frame_len_s,
                               settings.czt.analysis_rate_hz)
    tracks = sliding_estimate(series, settings.frame_len_s, settings.czt,
                              settings.max_paths)
    return frames, frame_estimate_table(tracks)


def run_online_pass(frames, table, cfg: LearnConfig, settings: SweepSettings,
                    seed: int, start_frame: int = 0) -> PassResult:
    """Online train/predict over a span of frames; evaluate the tail."""
    engine = PredictorEngine(settings.shape, cfg, seed=seed,
                             amp_range=settings.amp_range)
    first = start_frame + settings.czt.window_frames // 2
    last = start_frame + settings.pass_frames - 2
    eval_from = last - settings.eval_frames + 1

    tau = (np.arange(PHASE_ERROR_POINTS) + 0.5) / PHASE_ERROR_POINTS * settings.frame_len_s
    result = PassResult()
    for frame in range(first, last + 1):
        estimates = table.get(frame)
        if not estimates:
            continue
        report = engine.update_frame(frame, {t: v for t, (v, _) in estimates.items()})
        if report.nonzero_ratio > 0 and frame >= eval_from:
            result.ratios.append(report.nonzero_ratio)
        if frame >= eval_from and frame + 1 < len(frames):
            anchors = engine.predict_tracks(1)
            if not anchors:
                continue
            predicted = np.zeros(PHASE_ERROR_POINTS, dtype=complex)
            for tid, arr in anchors.items():
                if tid not in estimates:
                    continue
                doppler = estimates[tid][1]
                predicted += arr[0] * np.exp(2j * np.pi * doppler * tau)
            truth = frame_slice(frames[frame + 1], tau)
            result.phase_errors.append(accumulated_phase_error(predicted, truth))
    return result


@dataclass(frozen=True)
class SweepCell:
    delta_x: float
    penalty: str
    alpha: float
    mean_ratio: float
    max_phase_error: float
    trials: int


def run_sweep(settings: SweepSettings = SweepSettings()):
    """Full (delta_x x penalty x alpha) sweep; returns a list of SweepCell."""
    n_frames = settings.pass_frames + settings.trials * settings.trial_stride + 2
    cells = []
    for delta_x in settings.delta_x_list:
        frames, table = scenario_estimates(delta_x, n_frames, settings)
        combos = [(settings.penalties[0], 0.0)] + [
            (pen, a) for pen in settings.penalties
            for a in settings.alpha_list if a > 0.0]
        shared_zero = None
        for pen, alpha in combos:
            cfg = settings.learn_config(pen, alpha)
            ratios, errors = [], []
            for trial in range(settings.trials):
                res = run_online_pass(
                    frames, table, cfg, settings,
                    seed=settings.seed + 7919 * trial,
                    start_frame=trial * settings.trial_stride)
                ratios.append(res.mean_ratio)
                errors.append(res.max_phase_error)
            cell_ratio = float(np.mean(ratios))
            cell_err = float(np.max(errors))
            if alpha == 0.0:
                shared_zero = (cell_ratio, cell_err)
                for pen_out in settings.penalties:
                    cells.append(SweepCell(delta_x, pen_out, 0.0,
                                           cell_ratio, cell_err, settings.trials))
            else:
                cells.append(SweepCell(delta_x, pen, alpha, cell_ratio,
                                       cell_err, settings.trials))
    return cells


def summarize_by_alpha(cells, penalty: str):
    """Mean ratio and mean worst-phase-error per alpha across delta_x."""
    by_alpha: dict = {}
    for c in cells:
        if c.penalty == penalty:
            by_alpha.setdefault(c.alpha, []).append(c)
    out = []
    for alpha in sorted(by_alpha):
        group = by_alpha[alpha]
        out.append({
            "alpha": alpha,
            "mean_ratio": float(np.mean([c.mean_ratio for c in group])),
            "mean_max_phase_error": float(np.mean([c.max_phase_error for c in group])),
        })
    return out


def write_sweep_csv(path, cells) -> None:
    """Rows: delta_x, penalty, alpha, mean_ratio, max_phase_error, trials."""
    with open(path, "w") as fh:
        fh.write("delta_x,penalty,alpha,mean_ratio,max_phase_error,trials\n")
        for c in sorted(cells, key=lambda c: (c.delta_x, c.penalty, c.alpha)):
            fh.write(f"{float(c.delta_x)!r},{c.penalty},{float(c.alpha)!r},"
                     f"{float(c.mean_ratio)!r},{float(c.max_phase_error)!r},"
                     f"{c.trials}\n")


def run_jump_probe(cfg: LearnConfig, shape: NetworkShape = NetworkShape(),
                   seed: int = 0, frames: int = 170, jump_frame: int = 140,
                   amp: float = 0.4, step_rad: float = 0.9,
                   amp_range=(0.05, 0.3)):
    """Feed a rotating synthetic track with a pi phase jump; log ratios.

    Returns the engine's per-frame sparsity reports (trained frames only
    carry nonzero ratios).
    """
    engine = PredictorEngine(shape, cfg, seed=seed, amp_range=amp_range)
    for t in range(frames):
        phase = step_rad * t + (np.pi if t >= jump_frame else 0.0)
        engine.update_frame(t, {0: amp * np.exp(1j * phase)})
    return engine.ratio_history
