"""Amplitude-phase complex neuron math.

A two-layer complex-valued network whose weights live in polar form
(amplitude, phase).  Forward pass, quadratic loss, teacher backpropagation
and the three steepest-descent weight-update modes (plain, L1-penalized,
group-L21-penalized) are all expressed directly on the amplitude/phase
parameterization.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

# Penalty modes for the amplitude update.
PENALTY_NONE = "none"
PENALTY_L1 = "l1"
PENALTY_L21 = "l21"
PENALTY_MODES = (PENALTY_NONE, PENALTY_L1, PENALTY_L21)

# Guard on |u| when dividing in the phase-direction gradient, and on
# group norms in the L21 penalty (subgradient 0 at the origin).
U_EPS = 1e-12


def wrap_phase(theta):
    """Wrap an angle (array or scalar) into the canonical range (-pi, pi]."""
    wrapped = np.mod(-np.asarray(theta) + np.pi, 2.0 * np.pi)
    return -(wrapped - np.pi)


@dataclass(frozen=True)
class PolarComplex:
    """A complex value carried as (amplitude, phase)."""

    amplitude: float
    phase: float

    def __post_init__(self):
        if not (math.isfinite(self.amplitude) and math.isfinite(self.phase)):
            raise ValueError("PolarComplex fields must be finite")
        if self.amplitude < 0:
            raise ValueError("amplitude must be non-negative")

    def canonicalize(self) -> "PolarComplex":
        """Return an equal value with phase in (-pi, pi]; phase of 0 is 0."""
        if self.amplitude == 0.0:
            return PolarComplex(0.0, 0.0)
        return PolarComplex(self.amplitude, float(wrap_phase(self.phase)))

    def to_complex(self) -> complex:
        return self.amplitude * complex(math.cos(self.phase), math.sin(self.phase))

    @staticmethod
    def from_complex(value: complex) -> "PolarComplex":
        value = complex(value)
        if value == 0:
            return PolarComplex(0.0, 0.0)
        return PolarComplex(abs(value), math.atan2(value.imag, value.real))


@dataclass(frozen=True)
class NetworkShape:
    """Input terminal count, hidden neuron count; a single output neuron."""

    input_terminals: int = 30
    hidden_neurons: int = 30
    outputs: int = 1

    def __post_init__(self):
        if self.input_terminals < 1 or self.hidden_neurons < 1:
            raise ValueError("network needs at least one input and one hidden neuron")
        if self.outputs != 1:
            raise ValueError("only single-output networks are supported")


@dataclass(frozen=True)
class LearnConfig:
    """Step sizes, penalty coefficient and iteration count for one update.

    The default step sizes are tuned so online passes over the synthetic
    scenes escape the tanh amplitude plateau within a few tens of frames;
    much smaller steps leave the amplitude dynamics frozen.
    """

    kappa1: float = 0.2
    kappa2: float = 0.1
    alpha: float = 0.0
    iterations: int = 10
    penalty_mode: str = PENALTY_NONE

    def __post_init__(self):
        if not (self.kappa1 > 0 and self.kappa2 > 0):
            raise ValueError("step sizes kappa1, kappa2 must be positive")
        if not (self.alpha >= 0 and math.isfinite(self.alpha)):
            raise ValueError("alpha must be finite and non-negative")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.penalty_mode not in PENALTY_MODES:
            raise ValueError(f"penalty_mode must be one of {PENALTY_MODES}")


class LayerWeights:
    """Fully connected layer: (rows x cols) polar weights as two float arrays."""

    def __init__(self, amp, phase):
        amp = np.array(amp, dtype=float)
        phase = np.array(phase, dtype=float)
        if amp.shape != phase.shape or amp.ndim != 2:
            raise ValueError("amp and phase must be equal-shape 2-d arrays")
        if not (np.all(np.isfinite(amp)) and np.all(np.isfinite(phase))):
            raise ValueError("weight entries must be finite")
        if np.any(amp < 0):
            raise ValueError("weight amplitudes must be non-negative")
        self.amp = amp
        self.phase = phase

    @property
    def rows(self) -> int:
        return self.amp.shape[0]

    @property
    def cols(self) -> int:
        return self.amp.shape[1]

    def as_complex(self) -> np.ndarray:
        return self.amp * np.exp(1j * self.phase)

    def entry(self, k: int, j: int) -> PolarComplex:
        return PolarComplex(float(self.amp[k, j]), float(self.phase[k, j]))

    def copy(self) -> "LayerWeights":
        return LayerWeights(self.amp.copy(), self.phase.copy())

    @staticmethod
    def from_complex(values) -> "LayerWeights":
        values = np.asarray(values, dtype=complex)
        return LayerWeights(np.abs(values), np.angle(values))

    def to_json_dict(self, layer: int) -> dict:
        return {
            "layer": layer,
            "rows": self.rows,
            "cols": self.cols,
            "amplitude": self.amp.tolist(),
            "phase": self.phase.tolist(),
        }

    @staticmethod
    def from_json_dict(obj: dict) -> "LayerWeights":
        w = LayerWeights(np.array(obj["amplitude"]), np.array(obj["phase"]))
        if w.rows != obj["rows"] or w.cols != obj["cols"]:
            raise ValueError("weight array shape disagrees with declared rows/cols")
        return w


def init_weights(rows: int, cols: int, rng: np.random.Generator,
                 amp_range=(0.1, 1.0)) -> LayerWeights:
    """Random polar weights: amplitudes uniform in amp_range, phases in (-pi, pi]."""
    lo, hi = amp_range
    amp = rng.uniform(lo, hi, size=(rows, cols))
    phase = np.pi - rng.uniform(0.0, 2.0 * np.pi, size=(rows, cols))
    return LayerWeights(amp, phase)


# tanh rounds to 1.0 in float64 for |u| above ~19; keep outputs inside [0, 1)
# with enough margin that multiplying by a unit phasor cannot round back to 1.
_AMP_CEIL = 1.0 - 4e-16


def activation(u: np.ndarray) -> np.ndarray:
    """Amplitude-phase activation on complex input: tanh on |u|, phase kept."""
    u = np.asarray(u, dtype=complex)
    mag = np.minimum(np.tanh(np.abs(u)), _AMP_CEIL)
    return mag * np.exp(1j * np.angle(u))


def activation_ap(u: PolarComplex) -> PolarComplex:
    """Polar-scalar form of the activation; zero input maps to (0, 0)."""
    if u.amplitude == 0.0:
        return PolarComplex(0.0, 0.0)
    amp = min(math.tanh(u.amplitude), _AMP_CEIL)
    return PolarComplex(amp, u.phase).canonicalize()


@dataclass
class ForwardTrace:
    """All intermediates of one forward pass, kept for gradient computation."""

    z1: np.ndarray  # network inputs, complex (I,)
    u2: np.ndarray  # hidden internal states, complex (K,)
    z2: np.ndarray  # hidden outputs, complex (K,)
    u3: np.ndarray  # output internal state, complex (1,)
    z3: np.ndarray  # network output, complex (1,)

    def layer_arrays(self, layer: int):
        """(inputs z_l, internal states u_{l+1}, outputs z_{l+1}) for layer 1 or 2."""
        if layer == 1:
            return self.z1, self.u2, self.z2
        if layer == 2:
            return self.z2, self.u3, self.z3
        raise ValueError("layer must be 1 or 2")


def forward(shape: NetworkShape, w1: LayerWeights, w2: LayerWeights,
            inputs) -> ForwardTrace:
    """Run the two-layer forward pass and keep every intermediate."""
    z1 = np.asarray(inputs, dtype=complex).reshape(-1)
    if w1.rows != shape.hidden_neurons or w1.cols != shape.input_terminals:
        raise ValueError("hidden-layer weight shape disagrees with network shape")
    if w2.rows != 1 or w2.cols != shape.hidden_neurons:
        raise ValueError("output-layer weight shape disagrees with network shape")
    if z1.shape[0] != shape.input_terminals:
        raise ValueError(
            f"expected {shape.input_terminals} inputs, got {z1.shape[0]}")

    u2 = w1.as_complex() @ z1
    z2 = activation(u2)
    u3 = w2.as_complex() @ z2
    z3 = activation(u3)
    return ForwardTrace(z1=z1, u2=u2, z2=z2, u3=u3, z3=z3)


def loss(z, teacher) -> float:
    """Half squared error between output and teacher signals."""
    z = np.asarray(z, dtype=complex).reshape(-1)
    teacher = np.asarray(teacher, dtype=complex).reshape(-1)
    if z.shape != teacher.shape:
        raise ValueError("output and teacher lengths differ")
    return 0.5 * float(np.sum(np.abs(z - teacher) ** 2))


def bpts_teacher(w2: LayerWeights, teacher_out) -> np.ndarray:
    """Hidden-layer teacher from the output teacher via conjugated weights.

    Componentwise per hidden neuron k: conj(f_ap(conj(t) * w2[0, k])).
    """
    if w2.rows != 1:
        raise ValueError("output layer must have a single row")
    t = complex(np.asarray(teacher_out, dtype=complex).reshape(()))
    return np.conj(activation(np.conj(t) * w2.as_complex()[0, :]))


def grad_components(weights: LayerWeights, trace: ForwardTrace, teacher,
                    layer: int):
    """Per-weight descent fractions along the amplitude and phase directions.

    Returns (dE_dwa, dE_dwp, theta_rot), each (rows x cols), where the error
    is the half squared deviation of this layer's outputs from its teacher,
    and theta_rot is the output-minus-input-minus-weight phase.
    """
    z_in, u_out, z_out = trace.layer_arrays(layer)
    teacher = np.asarray(teacher, dtype=complex).reshape(-1)
    if teacher.shape[0] != z_out.shape[0]:
        raise ValueError("teacher length disagrees with layer output count")

    a_in = np.abs(z_in)
    th_in = np.angle(z_in)
    a_out = np.abs(z_out)
    th_out = np.angle(u_out)
    a_t = np.abs(teacher)
    th_t = np.angle(teacher)
    dth = th_out - th_t

    # Error gradient along the amplitude direction of each weight.
    amp_factor = (1.0 - a_out ** 2) * (a_out - a_t * np.cos(dth))
    de_dwa = amp_factor[:, None] * a_in[None, :]

    # ... and along the phase direction; |u| guarded near zero.
    u_mag = np.maximum(np.abs(u_out), U_EPS)
    pha_factor = a_out * a_t * np.sin(dth) / u_mag
    de_dwp = pha_factor[:, None] * a_in[None, :]

    theta_rot = th_out[:, None] - th_in[None, :] - weights.phase
    return de_dwa, de_dwp, theta_rot


def _penalty_term(weights: LayerWeights, cfg: LearnConfig) -> np.ndarray:
    """Extra amplitude-descent term contributed by the sparsity penalty."""
    if cfg.penalty_mode == PENALTY_NONE or cfg.alpha == 0.0:
        return np.zeros_like(weights.amp)
    if cfg.penalty_mode == PENALTY_L1:
        return np.full_like(weights.amp, cfg.alpha)
    # Group L21: one group per source terminal j (column of the layer).
    col_norm = np.linalg.norm(weights.amp, axis=0)
    dim_sqrt = math.sqrt(weights.rows)
    safe = np.maximum(col_norm, U_EPS)
    term = cfg.alpha * dim_sqrt * weights.amp / safe[None, :]
    term[:, col_norm < U_EPS] = 0.0
    return term


def update_weights(weights: LayerWeights, trace: ForwardTrace, teacher,
                   cfg: LearnConfig, layer: int) -> LayerWeights:
    """One steepest-descent step on this layer; amplitudes clamped at zero.

    The phase step is identical in all penalty modes: the penalty's phase
    contributions cancel through the rotation that maps the (amplitude,
    phase) descent fractions onto the polar parameters.
    """
    de_dwa, de_dwp, theta_rot = grad_components(weights, trace, teacher, layer)
    cos_rot = np.cos(theta_rot)
    sin_rot = np.sin(theta_rot)

    amp_step = de_dwa * cos_rot - de_dwp * sin_rot + _penalty_term(weights, cfg)
    pha_step = de_dwa * sin_rot + de_dwp * cos_rot

    new_amp = np.maximum(weights.amp - cfg.kappa1 * amp_step, 0.0)
    new_phase = weights.phase - cfg.kappa2 * pha_step
    return LayerWeights(new_amp, new_phase)


def layer_objective(weights: LayerWeights, z_in, teacher) -> float:
    """Half squared error of activation(W z_in) against the teacher.

    Single-layer objective used by the finite-difference gradient checks;
    kept independent of grad_components.
    """
    z_in = np.asarray(z_in, dtype=complex).reshape(-1)
    u = weights.as_complex() @ z_in
    return loss(activation(u), teacher)


def save_weights_json(path, w1: LayerWeights, w2: LayerWeights) -> None:
    """Write both layers to the documented JSON schema."""
    payload = {"layers": [w1.to_json_dict(1), w2.to_json_dict(2)]}
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_weights_json(path):
    """Read (w1, w2) back from save_weights_json output."""
    with open(path) as fh:
        payload = json.load(fh)
    layers = {obj["layer"]: LayerWeights.from_json_dict(obj) for obj in payload["layers"]}
    return layers[1], layers[2]
