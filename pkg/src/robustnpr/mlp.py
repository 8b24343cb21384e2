"""ReLU multilayer perceptrons with exact handwritten backpropagation.

A network is described by its full width vector (d, w_1, ..., w_D, 1): D
hidden layers plus the input and the scalar output.  Weights are plain
float64 numpy arrays and the gradient of the empirical risk is computed
analytically, layer by layer, so it can be checked against finite
differences.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .losses import LossSpec, loss_grad, loss_value

_MAGIC = b"RMLP"
_FORMAT_VERSION = 1


@dataclass(frozen=True)
class NetworkShape:
    """Width vector (d, w_1, ..., w_D, 1); D = number of hidden layers."""

    layer_widths: tuple[int, ...]

    def __post_init__(self):
        w = tuple(int(v) for v in self.layer_widths)
        object.__setattr__(self, "layer_widths", w)
        if len(w) < 2:
            raise ValueError("need at least input and output widths")
        if any(v < 1 for v in w):
            raise ValueError("all widths must be >= 1")
        if w[-1] != 1:
            raise ValueError("output width must be 1")

    @property
    def d(self) -> int:
        return self.layer_widths[0]

    def depth(self) -> int:
        """Number of hidden layers."""
        return len(self.layer_widths) - 2

    def width(self) -> int:
        """Maximum hidden-layer width (0 for a bare linear model)."""
        hidden = self.layer_widths[1:-1]
        return max(hidden) if hidden else 0

    def n_links(self) -> int:
        return len(self.layer_widths) - 1


def param_count(shape: NetworkShape) -> int:
    """Total number of weights and biases."""
    w = shape.layer_widths
    return sum(w[i + 1] * (w[i] + 1) for i in range(len(w) - 1))


def neuron_count(shape: NetworkShape) -> int:
    """Number of hidden computational units."""
    return sum(shape.layer_widths[1:-1])


@dataclass(frozen=True)
class MlpParams:
    """Per-link weight matrices (out x in) and bias vectors.

    Treated as an immutable value: training code replaces arrays rather
    than writing into them, so a params object can be shared across
    threads for evaluation.
    """

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.weights) != len(self.biases):
            raise ValueError("weights/biases length mismatch")
        for W, b in zip(self.weights, self.biases):
            if W.ndim != 2 or b.ndim != 1 or W.shape[0] != b.shape[0]:
                raise ValueError("inconsistent layer shapes")
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise ValueError("parameters must be finite")

    @property
    def shape(self) -> NetworkShape:
        widths = [self.weights[0].shape[1]] + [W.shape[0] for W in self.weights]
        return NetworkShape(tuple(widths))


@dataclass(frozen=True)
class Gradients:
    """Mean-risk gradient, shaped exactly like MlpParams."""

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]


def init_network(shape: NetworkShape, rng) -> MlpParams:
    """Draw weights and biases of layer i from Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)).

    Layer draws are interleaved (W then b per link) so the layout is fixed
    by the stream alone.
    """
    widths = shape.layer_widths
    weights, biases = [], []
    for i in range(len(widths) - 1):
        fan_in, fan_out = widths[i], widths[i + 1]
        bound = 1.0 / math.sqrt(fan_in)
        weights.append(rng.uniform(size=(fan_out, fan_in), low=-bound, high=bound))
        biases.append(rng.uniform(size=(fan_out,), low=-bound, high=bound))
    return MlpParams(tuple(weights), tuple(biases))


def forward_batch(params: MlpParams, xs: np.ndarray) -> np.ndarray:
    """Network outputs for a (m, d) batch, returned as a length-m vector."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[1] != params.weights[0].shape[1]:
        raise ValueError(
            f"input dimension mismatch: got {xs.shape}, "
            f"network expects d={params.weights[0].shape[1]}"
        )
    a = xs
    last = len(params.weights) - 1
    for i, (W, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ W.T + b
        a = np.maximum(z, 0.0) if i < last else z
    return a[:, 0]


def forward(params: MlpParams, x) -> float:
    """Scalar network output for a single d-vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("forward expects a 1-d input vector")
    return float(forward_batch(params, x[None, :])[0])


def forward_cached(params: MlpParams, xs: np.ndarray):
    """Forward pass keeping the per-layer pre-activations for backprop.

    Returns (outputs, activations, preacts) where activations[i] feeds link
    i and preacts[i] is the pre-ReLU value of hidden layer i.
    """
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[1] != params.weights[0].shape[1]:
        raise ValueError("input dimension mismatch")
    acts = [xs]
    preacts = []
    a = xs
    last = len(params.weights) - 1
    for i, (W, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ W.T + b
        if i < last:
            preacts.append(z)
            a = np.maximum(z, 0.0)
            acts.append(a)
        else:
            out = z[:, 0]
    return out, acts, preacts


def backward(params: MlpParams, xs: np.ndarray, ys: np.ndarray, loss: LossSpec):
    """Empirical risk and its exact gradient over a batch.

    ReLU uses the subgradient 1{z > 0}; the loss supplies its own
    subgradient at the output.  Raises FloatingPointError when the network
    output is no longer finite so callers can flag divergence.
    """
    ys = np.asarray(ys, dtype=np.float64)
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or ys.ndim != 1 or xs.shape[0] != ys.shape[0]:
        raise ValueError("batch shapes are inconsistent")
    m = xs.shape[0]
    if m == 0:
        raise ValueError("empty batch")

    out, acts, preacts = forward_cached(params, xs)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite network output")
    risk = float(np.mean(loss_value(loss, out, ys)))

    delta = (np.asarray(loss_grad(loss, out, ys)) / m)[:, None]  # (m, 1)
    n_links = len(params.weights)
    g_w = [None] * n_links
    g_b = [None] * n_links
    for i in range(n_links - 1, -1, -1):
        g_w[i] = delta.T @ acts[i]
        g_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ params.weights[i]) * (preacts[i - 1] > 0.0)
    return risk, Gradients(tuple(g_w), tuple(g_b))


def as_predictor(params: MlpParams, clamp: float | None = None):
    """Wrap params as a callable (m, d) -> (m,), optionally clamped to [-clamp, clamp]."""
    if clamp is None:
        return lambda xs: forward_batch(params, xs)
    c = float(clamp)

    def _predict(xs):
        return np.clip(forward_batch(params, xs), -c, c)

    return _predict


def pdim_bounds(shape: NetworkShape, c_lo: float = 1.0, c_hi: float = 1.0):
    """Pseudo-dimension sandwich c_lo*S*D*log(S/D) <= Pdim <= c_hi*S*D*log(S).

    The universal constants are unknown, so callers supply multipliers.
    """
    s = param_count(shape)
    d = shape.depth()
    if d < 1:
        raise ValueError("pseudo-dimension bounds need at least one hidden layer")
    if s <= d:
        raise ValueError("require S > D")
    lo = c_lo * s * d * math.log(s / d)
    hi = c_hi * s * d * math.log(s)
    return lo, hi


def save_params(params: MlpParams, path) -> None:
    """Serialize to the flat binary layout: widths, then per link W (row-major) and b."""
    widths = params.shape.layer_widths
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _FORMAT_VERSION, len(widths)))
        fh.write(struct.pack(f"<{len(widths)}I", *widths))
        for W, b in zip(params.weights, params.biases):
            fh.write(np.ascontiguousarray(W, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_params(path) -> MlpParams:
    """Bit-exact inverse of save_params."""
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError(f"{path}: not a serialized network")
        version, n_widths = struct.unpack("<II", fh.read(8))
        if version != _FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported format version {version}")
        widths = struct.unpack(f"<{n_widths}I", fh.read(4 * n_widths))
        weights, biases = [], []
        for i in range(n_widths - 1):
            n_out, n_in = widths[i + 1], widths[i]
            W = np.frombuffer(fh.read(8 * n_out * n_in), dtype="<f8").reshape(n_out, n_in)
            b = np.frombuffer(fh.read(8 * n_out), dtype="<f8")
            weights.append(W.astype(np.float64))
            biases.append(b.astype(np.float64))
        if fh.read(1):
            raise ValueError(f"{path}: trailing bytes")
    return MlpParams(tuple(weights), tuple(biases))
