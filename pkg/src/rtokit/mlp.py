"""Fully-connected network surrogate, written directly on numpy.

Hidden layers use the swish activation z * sigmoid(z); the output layer is
affine.  Training minimizes the mean squared vector error over the full
batch with Adam.  The exact input Jacobian (used by the sampler for
determinants and Gauss-Newton steps) is accumulated in reverse from the
output layer.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import BinaryIO

import numpy as np
from scipy.special import expit

_MAGIC = b"MLPF"


def swish(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    return z * expit(z)


def swish_grad(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    s = expit(z)
    return s * (1.0 + z * (1.0 - s))


@dataclass(frozen=True)
class MlpArchitecture:
    """Layer widths [n_in, hidden..., n_out]; hidden may be empty."""

    n_in: int
    n_out: int
    hidden: tuple[int, ...] = ()

    def __post_init__(self):
        widths = (self.n_in, *self.hidden, self.n_out)
        if any(int(w) != w or w < 1 for w in widths):
            raise ValueError("all layer widths must be positive integers")

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.n_in, *self.hidden, self.n_out)

    @classmethod
    def uniform(cls, n_in: int, n_out: int, depth: int, width: int) -> "MlpArchitecture":
        return cls(n_in=n_in, n_out=n_out, hidden=(width,) * depth)


@dataclass
class TrainingSet:
    inputs: np.ndarray
    targets: np.ndarray
    n_forward_evals: int = 0

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        self.targets = np.atleast_2d(np.asarray(self.targets, dtype=float))
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise ValueError("inputs and targets must be paired")
        if self.inputs.shape[0] < 1:
            raise ValueError("training set is empty")
        if not (np.all(np.isfinite(self.inputs)) and np.all(np.isfinite(self.targets))):
            raise ValueError("training data must be finite")

    @property
    def size(self) -> int:
        return self.inputs.shape[0]


def init_params(
    arch: MlpArchitecture, rng: np.random.Generator
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Fan-in scaled normal weights, zero biases."""
    widths = arch.widths
    weights = []
    biases = []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        weights.append(rng.standard_normal((fan_out, fan_in)) / np.sqrt(fan_in))
        biases.append(np.zeros(fan_out))
    return weights, biases


def _forward_trace(weights, biases, X):
    """Batch forward pass keeping hidden pre- and post-activations."""
    pre = []
    post = [X]
    h = X
    for W, b in zip(weights[:-1], biases[:-1]):
        a = h @ W.T + b
        pre.append(a)
        h = swish(a)
        post.append(h)
    out = h @ weights[-1].T + biases[-1]
    return out, pre, post


def loss_and_gradients(weights, biases, X, Y):
    """Mean squared vector error over the batch and its parameter gradients."""
    n = X.shape[0]
    out, pre, post = _forward_trace(weights, biases, X)
    err = out - Y
    loss = float(np.sum(err * err) / n)
    g = (2.0 / n) * err
    grad_w = [None] * len(weights)
    grad_b = [None] * len(biases)
    grad_w[-1] = g.T @ post[-1]
    grad_b[-1] = g.sum(axis=0)
    for k in range(len(weights) - 2, -1, -1):
        g = (g @ weights[k + 1]) * swish_grad(pre[k])
        grad_w[k] = g.T @ post[k]
        grad_b[k] = g.sum(axis=0)
    return loss, grad_w, grad_b


class Adam:
    """Adam with bias correction; state is kept per parameter array."""

    def __init__(self, learning_rate=5e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = None
        self._v = None

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> list[np.ndarray]:
        if self._m is None:
            self._m = [np.zeros_like(p) for p in params]
            self._v = [np.zeros_like(p) for p in params]
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        out = []
        for i, (p, g) in enumerate(zip(params, grads)):
            self._m[i] = b1 * self._m[i] + (1.0 - b1) * g
            self._v[i] = b2 * self._v[i] + (1.0 - b2) * g * g
            m_hat = self._m[i] / (1.0 - b1 ** self.t)
            v_hat = self._v[i] / (1.0 - b2 ** self.t)
            out.append(p - self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps))
        return out


@dataclass
class TrainOptions:
    learning_rate: float = 5e-4
    epochs: int = 20000
    seed: object = 0
    loss_tol: float = 1e-8
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class MlpSurrogate:
    arch: MlpArchitecture
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    final_loss: float = np.nan
    epochs_run: int = 0
    loss_history: np.ndarray = field(default_factory=lambda: np.array([]))

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        out, _, _ = _forward_trace(self.weights, self.biases, np.atleast_2d(x))
        return out[0] if single else out

    def forward_with_input_jacobian(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        if x.ndim != 1:
            raise ValueError("input jacobian is defined for a single input vector")
        out, pre, _ = _forward_trace(self.weights, self.biases, x[None, :])
        G = self.weights[-1]
        for k in range(len(self.weights) - 2, -1, -1):
            G = (G * swish_grad(pre[k][0])[None, :]) @ self.weights[k]
        return out[0], G

    def input_jacobian(self, x: np.ndarray) -> np.ndarray:
        return self.forward_with_input_jacobian(x)[1]


def train(arch: MlpArchitecture, data: TrainingSet, options: TrainOptions | None = None) -> MlpSurrogate:
    """Full-batch Adam; stops early once the loss falls below ``loss_tol``."""
    opts = options or TrainOptions()
    if data.inputs.shape[1] != arch.n_in or data.targets.shape[1] != arch.n_out:
        raise ValueError("training set dimensions do not match the architecture")
    rng = np.random.default_rng(opts.seed)
    weights, biases = init_params(arch, rng)
    optimizer = Adam(opts.learning_rate, opts.beta1, opts.beta2, opts.eps)
    history = np.empty(opts.epochs)
    loss = np.inf
    epochs_run = 0
    for epoch in range(opts.epochs):
        loss, grad_w, grad_b = loss_and_gradients(weights, biases, data.inputs, data.targets)
        if not np.isfinite(loss):
            raise RuntimeError(f"training diverged: loss became non-finite at epoch {epoch}")
        history[epoch] = loss
        epochs_run = epoch + 1
        if loss < opts.loss_tol:
            break
        params = optimizer.step(weights + biases, grad_w + grad_b)
        weights = params[: len(weights)]
        biases = params[len(weights):]
    return MlpSurrogate(
        arch=arch,
        weights=weights,
        biases=biases,
        final_loss=float(loss),
        epochs_run=epochs_run,
        loss_history=history[:epochs_run].copy(),
    )


def save_surrogate(net: MlpSurrogate, path) -> None:
    """Binary format: magic, int32 width count, int32 widths, then per affine
    layer the row-major float64 weight matrix followed by the bias vector,
    all little-endian."""
    widths = net.arch.widths
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<i", len(widths)))
        fh.write(struct.pack(f"<{len(widths)}i", *widths))
        for W, b in zip(net.weights, net.biases):
            fh.write(np.ascontiguousarray(W, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def _read_exact(fh: BinaryIO, count: int) -> bytes:
    buf = fh.read(count)
    if len(buf) != count:
        raise ValueError("surrogate file is truncated")
    return buf


def load_surrogate(path) -> MlpSurrogate:
    with open(path, "rb") as fh:
        if _read_exact(fh, 4) != _MAGIC:
            raise ValueError("not a surrogate parameter file")
        (n_widths,) = struct.unpack("<i", _read_exact(fh, 4))
        if n_widths < 2:
            raise ValueError("surrogate file header is invalid")
        widths = struct.unpack(f"<{n_widths}i", _read_exact(fh, 4 * n_widths))
        arch = MlpArchitecture(n_in=widths[0], n_out=widths[-1], hidden=tuple(widths[1:-1]))
        weights = []
        biases = []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            W = np.frombuffer(_read_exact(fh, 8 * fan_out * fan_in), dtype="<f8")
            weights.append(W.reshape(fan_out, fan_in).copy())
            biases.append(np.frombuffer(_read_exact(fh, 8 * fan_out), dtype="<f8").copy())
        if fh.read(1):
            raise ValueError("surrogate file has trailing bytes")
    return MlpSurrogate(arch=arch, weights=weights, biases=biases)
