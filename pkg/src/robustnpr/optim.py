"""Mini-batch Adam training of the ReLU networks.

The protocol is fixed: uniform init, Adam with betas (0.9, 0.99), batch
size ceil(n/4) by default, reshuffled every epoch, a fixed epoch budget
(no early stopping), and a per-epoch mean-loss trace.  Everything is a
pure function of (dataset, shape, loss, config, stream).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .datagen import Dataset, PrngStream
from .losses import LossSpec
from .mlp import Gradients, MlpParams, NetworkShape, backward, init_network

MIN_EPOCHS = 400


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss or gradient."""

    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message)
        self.epoch = epoch


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-8
    epochs: int = 1000
    batch_fraction: float = 0.25
    shuffle: bool = True
    seed: int = 0
    # Escape hatch for unit tests; the experiment protocol wants >= 400.
    allow_short_epochs: bool = False

    def __post_init__(self):
        if not 0.0 < self.beta1 < 1.0 or not 0.0 < self.beta2 < 1.0:
            raise ValueError("betas must lie strictly inside (0, 1)")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 < self.batch_fraction <= 1.0:
            raise ValueError("batch_fraction must be in (0, 1]")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.epochs < MIN_EPOCHS and not self.allow_short_epochs:
            raise ValueError(
                f"epochs < {MIN_EPOCHS}; pass allow_short_epochs=True to override"
            )


@dataclass(frozen=True)
class AdamState:
    m_weights: tuple[np.ndarray, ...]
    m_biases: tuple[np.ndarray, ...]
    v_weights: tuple[np.ndarray, ...]
    v_biases: tuple[np.ndarray, ...]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: MlpParams) -> "AdamState":
        zw = tuple(np.zeros_like(W) for W in params.weights)
        zb = tuple(np.zeros_like(b) for b in params.biases)
        return cls(zw, zb, tuple(np.zeros_like(W) for W in params.weights),
                   tuple(np.zeros_like(b) for b in params.biases), 0)


@dataclass
class TrainTrace:
    """Per-epoch mean training loss."""

    losses: list[float] = field(default_factory=list)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["epoch", "loss"])
            for i, v in enumerate(self.losses, start=1):
                wr.writerow([i, repr(v)])


def _adam_update(theta, m, v, g, cfg: TrainConfig, t: int):
    m_new = cfg.beta1 * m + (1.0 - cfg.beta1) * g
    v_new = cfg.beta2 * v + (1.0 - cfg.beta2) * (g * g)
    m_hat = m_new / (1.0 - cfg.beta1 ** t)
    v_hat = v_new / (1.0 - cfg.beta2 ** t)
    theta_new = theta - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)
    return theta_new, m_new, v_new


def adam_step(state: AdamState, params: MlpParams, grads: Gradients, cfg: TrainConfig):
    """One bias-corrected Adam update; pure, returns (new_state, new_params)."""
    for g in (*grads.weights, *grads.biases):
        if not np.all(np.isfinite(g)):
            raise DivergenceError("non-finite gradient in Adam step")
    t = state.t + 1
    new_w, new_mw, new_vw = [], [], []
    for W, m, v, g in zip(params.weights, state.m_weights, state.v_weights, grads.weights):
        Wn, mn, vn = _adam_update(W, m, v, g, cfg, t)
        new_w.append(Wn)
        new_mw.append(mn)
        new_vw.append(vn)
    new_b, new_mb, new_vb = [], [], []
    for b, m, v, g in zip(params.biases, state.m_biases, state.v_biases, grads.biases):
        bn, mn, vn = _adam_update(b, m, v, g, cfg, t)
        new_b.append(bn)
        new_mb.append(mn)
        new_vb.append(vn)
    new_state = AdamState(tuple(new_mw), tuple(new_mb), tuple(new_vw), tuple(new_vb), t)
    return new_state, MlpParams(tuple(new_w), tuple(new_b))


def train(dataset: Dataset, shape: NetworkShape, loss: LossSpec, cfg: TrainConfig,
          rng: PrngStream, hook=None):
    """Run the full training protocol and return (params, trace).

    ``hook``, when given, is called as hook(epoch, params, mean_loss) after
    every epoch (used by the trace plots).  Divergence raises
    DivergenceError with the offending epoch; retrying under a fresh
    stream is the caller's call.
    """
    if dataset.d != shape.d:
        raise ValueError(f"dataset has d={dataset.d} but network expects d={shape.d}")
    n = dataset.n
    batch = max(1, math.ceil(n * cfg.batch_fraction))
    params = init_network(shape, rng)
    state = AdamState.zeros_like(params)
    trace = TrainTrace()

    # Overflow on heavy-tailed cells shows up as inf and is handled by the
    # finiteness checks; keep numpy from warning about it.
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(1, cfg.epochs + 1):
            order = rng.permutation(n) if cfg.shuffle else np.arange(n)
            epoch_loss = 0.0
            for start in range(0, n, batch):
                idx = order[start:start + batch]
                try:
                    risk, grads = backward(params, dataset.xs[idx], dataset.ys[idx], loss)
                except FloatingPointError as exc:
                    raise DivergenceError(str(exc), epoch=epoch) from exc
                if not math.isfinite(risk):
                    raise DivergenceError("non-finite training risk", epoch=epoch)
                try:
                    state, params = adam_step(state, params, grads, cfg)
                except DivergenceError as exc:
                    raise DivergenceError(str(exc), epoch=epoch) from exc
                epoch_loss += risk * len(idx)
            mean_loss = epoch_loss / n
            trace.losses.append(mean_loss)
            if hook is not None:
                hook(epoch, params, mean_loss)

    for arr in (*params.weights, *params.biases):
        if not np.all(np.isfinite(arr)):
            raise DivergenceError("non-finite parameters after training", epoch=cfg.epochs)
    return params, trace
