"""Comparison predictors: linear extrapolation, complex AR, gated recurrent net.

The linear and AR predictors operate on complex sequences directly.  The
recurrent baseline is real-valued: complex inputs are split into real and
imaginary parts, and the first two hidden-state components form the
prediction readout.
"""

from __future__ import annotations

from collections import deque

import numpy as np

AR_DEFAULT_ORDER = 4
AR_RIDGE = 1e-8


def linear_predict(history, horizon: int = 1) -> np.ndarray:
    """First-order extrapolation of a complex sequence, iterated."""
    history = np.asarray(history, dtype=complex)
    if history.size < 2:
        raise ValueError("linear prediction needs at least two history points")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    a, b = history[-2], history[-1]
    out = np.empty(horizon, dtype=complex)
    for i in range(horizon):
        nxt = 2 * b - a
        out[i] = nxt
        a, b = b, nxt
    return out


def fit_ar(history, order: int):
    """Complex AR coefficients by least squares on lagged history.

    Solves the normal equations; a singular system falls back to a small
    ridge term.  Coefficient k multiplies the value k+1 steps back.
    """
    x = np.asarray(history, dtype=complex)
    if order < 1:
        raise ValueError("order must be >= 1")
    if x.size < 2 * order:
        raise ValueError("history must hold at least 2 * order samples")
    rows = np.array([x[t - 1::-1][:order] for t in range(order, x.size)])
    y = x[order:]
    gram = rows.conj().T @ rows
    rhs = rows.conj().T @ y
    try:
        coef = np.linalg.solve(gram, rhs)
        if not np.all(np.isfinite(coef.view(float))):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        coef = np.linalg.solve(gram + AR_RIDGE * np.eye(order), rhs)
    return coef


def ar_predict(history, order: int = AR_DEFAULT_ORDER, horizon: int = 1) -> np.ndarray:
    """Fit AR(order) on the history and predict `horizon` steps ahead."""
    x = np.asarray(history, dtype=complex)
    coef = fit_ar(x, order)
    window = deque(x[-order:][::-1], maxlen=order)  # most recent first
    out = np.empty(horizon, dtype=complex)
    for i in range(horizon):
        nxt = complex(np.dot(coef, np.array(window)))
        out[i] = nxt
        window.appendleft(nxt)
    return out


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


class GruState:
    """Weights and hidden state of the gated recurrent baseline."""

    def __init__(self, input_dim: int, hidden_dim: int, rng, scale: float = 0.2):
        rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
        def mat(rows, cols):
            return rng.normal(scale=scale / np.sqrt(cols), size=(rows, cols))
        self.w_y = mat(hidden_dim, input_dim)
        self.u_y = mat(hidden_dim, hidden_dim)
        self.w_r = mat(hidden_dim, input_dim)
        self.u_r = mat(hidden_dim, hidden_dim)
        self.w = mat(hidden_dim, input_dim)
        self.u = mat(hidden_dim, hidden_dim)
        self.h = np.zeros(hidden_dim)

    @property
    def hidden_dim(self):
        return self.h.shape[0]

    def matrices(self):
        return [self.w_y, self.u_y, self.w_r, self.u_r, self.w, self.u]


def gru_step(state: GruState, x, h_prev=None):
    """One recurrence step; returns (h_t, cache for backprop).

    Update gate y and reset gate r are logistic; the intermediate state is
    a tanh of the reset-gated recurrence; the new state mixes the previous
    state and the intermediate one through the update gate.
    """
    x = np.asarray(x, dtype=float)
    h_prev = state.h if h_prev is None else np.asarray(h_prev, dtype=float)
    y = sigmoid(state.w_y @ x + state.u_y @ h_prev)
    r = sigmoid(state.w_r @ x + state.u_r @ h_prev)
    rh = r * h_prev
    h_tilde = np.tanh(state.w @ x + state.u @ rh)
    h = y * h_prev + (1.0 - y) * h_tilde
    cache = {"x": x, "h_prev": h_prev, "y": y, "r": r, "rh": rh, "h_tilde": h_tilde,
             "h": h}
    return h, cache


def gru_loss(h, target) -> float:
    """Half squared readout error; the first two components carry (re, im)."""
    target = np.asarray(target, dtype=float)
    readout = h[:target.shape[0]]
    return 0.5 * float(np.sum((readout - target) ** 2))


def gru_gradients(state: GruState, cache, target):
    """Analytic single-step gradients of the readout loss.

    The previous hidden state is treated as a constant (truncated
    backpropagation over one step).  Returns gradients in the order of
    state.matrices().
    """
    target = np.asarray(target, dtype=float)
    dh = np.zeros_like(cache["h"])
    dh[:target.shape[0]] = cache["h"][:target.shape[0]] - target

    y, r, h_prev, h_tilde = cache["y"], cache["r"], cache["h_prev"], cache["h_tilde"]
    g_ay = dh * (h_prev - h_tilde) * y * (1.0 - y)
    g_ah = dh * (1.0 - y) * (1.0 - h_tilde ** 2)
    g_ar = (state.u.T @ g_ah) * h_prev * r * (1.0 - r)

    x = cache["x"]
    return [
        np.outer(g_ay, x), np.outer(g_ay, h_prev),
        np.outer(g_ar, x), np.outer(g_ar, h_prev),
        np.outer(g_ah, x), np.outer(g_ah, cache["rh"]),
    ]


def gru_train_step(state: GruState, x, target, lr: float, epochs: int = 1) -> float:
    """Train on one (input, target) pair and commit the new hidden state.

    The stored hidden state stays fixed while the weights take `epochs`
    descent steps; the final forward pass becomes the next hidden state.
    Returns the last loss.
    """
    h_prev = state.h.copy()
    last = 0.0
    cache = None
    for _ in range(epochs):
        h, cache = gru_step(state, x, h_prev)
        last = gru_loss(h, target)
        grads = gru_gradients(state, cache, target)
        for m, g in zip(state.matrices(), grads):
            m -= lr * g
    h, _ = gru_step(state, x, h_prev)
    state.h = h
    return last


class GruPredictor:
    """Online per-track predictor wrapping the gated recurrent unit."""

    def __init__(self, input_count: int = 30, hidden_dim: int = 16,
                 lr: float = 0.01, epochs: int = 10, seed=0):
        self.input_count = input_count
        self.lr = lr
        self.epochs = epochs
        self.state = GruState(2 * input_count, hidden_dim, seed)
        self.history = deque(maxlen=input_count)
        self.n_updates = 0

    @staticmethod
    def _split(values) -> np.ndarray:
        out = np.empty(2 * len(values))
        for i, v in enumerate(values):
            out[2 * i] = v.real
            out[2 * i + 1] = v.imag
        return out

    def _input_vector(self, window) -> np.ndarray:
        return self._split(list(window)[::-1])  # most recent estimate first

    def observe(self, estimate: complex):
        estimate = complex(estimate)
        if len(self.history) == self.input_count:
            x = self._input_vector(self.history)
            target = np.array([estimate.real, estimate.imag])
            gru_train_step(self.state, x, target, self.lr, self.epochs)
            self.n_updates += 1
        self.history.append(estimate)

    @property
    def trained(self) -> bool:
        return self.n_updates > 0

    def predict(self, steps: int = 1) -> np.ndarray:
        if not self.trained:
            raise RuntimeError("predictor has not been updated yet")
        window = deque(self.history, maxlen=self.input_count)
        h = self.state.h.copy()
        out = np.empty(steps, dtype=complex)
        for i in range(steps):
            h, _ = gru_step(self.state, self._input_vector(window), h)
            out[i] = complex(h[0], h[1])
            window.append(out[i])
        return out
