"""Tests for the Adam training loop."""

import numpy as np
import pytest

from robustnpr.datagen import Dataset, PrngStream
from robustnpr.losses import LossSpec
from robustnpr.mlp import MlpParams, NetworkShape, backward, init_network
from robustnpr.optim import (AdamState, DivergenceError, TrainConfig,
                             adam_step, train)


def _line_dataset():
    xs = np.array([[0.0], [0.25], [0.5], [1.0]])
    return Dataset(xs=xs, ys=2.0 * xs[:, 0], provenance={})


def _grads_like(params, fill):
    from robustnpr.mlp import Gradients

    return Gradients(
        tuple(np.full_like(W, fill) for W in params.weights),
        tuple(np.full_like(b, fill) for b in params.biases),
    )


class TestConfig:
    def test_defaults(self):
        cfg = TrainConfig()
        assert cfg.learning_rate == 0.01
        assert (cfg.beta1, cfg.beta2) == (0.9, 0.99)
        assert cfg.epochs == 1000
        assert cfg.batch_fraction == 0.25

    def test_epoch_floor(self):
        with pytest.raises(ValueError, match="epochs"):
            TrainConfig(epochs=0, allow_short_epochs=True)
        with pytest.raises(ValueError, match="400"):
            TrainConfig(epochs=100)
        TrainConfig(epochs=100, allow_short_epochs=True)

    def test_ranges(self):
        with pytest.raises(ValueError):
            TrainConfig(beta1=1.0)
        with pytest.raises(ValueError):
            TrainConfig(batch_fraction=0.0)
        with pytest.raises(ValueError):
            TrainConfig(learning_rate=-1)


class TestAdamStep:
    def test_zero_gradient_fixed_point(self):
        params = init_network(NetworkShape((1, 3, 1)), PrngStream(1))
        state = AdamState.zeros_like(params)
        new_state, new_params = adam_step(state, params, _grads_like(params, 0.0),
                                          TrainConfig())
        for a, b in zip((*params.weights, *params.biases),
                        (*new_params.weights, *new_params.biases)):
            assert np.array_equal(a, b)
        assert new_state.t == 1

    def test_first_step_hand_value(self):
        # scalar theta=0, g=1, lr=0.01: bias correction makes m_hat=v_hat=1
        params = MlpParams((np.array([[0.0]]),), (np.array([0.0]),))
        state = AdamState.zeros_like(params)
        grads = _grads_like(params, 1.0)
        cfg = TrainConfig(learning_rate=0.01)
        _, new_params = adam_step(state, params, grads, cfg)
        expected = -0.01 * 1.0 / (1.0 + cfg.eps)
        assert new_params.weights[0][0, 0] == pytest.approx(expected, rel=1e-12)
        assert abs(new_params.weights[0][0, 0] + 0.01) < 1e-9

    def test_pure_and_deterministic(self):
        params = init_network(NetworkShape((2, 4, 1)), PrngStream(5))
        state = AdamState.zeros_like(params)
        grads = _grads_like(params, 0.3)
        s1, p1 = adam_step(state, params, grads, TrainConfig())
        s2, p2 = adam_step(state, params, grads, TrainConfig())
        for a, b in zip((*p1.weights, *p1.biases), (*p2.weights, *p2.biases)):
            assert np.array_equal(a, b)
        assert s1.t == s2.t

    def test_nonfinite_grads_raise(self):
        params = init_network(NetworkShape((1, 2, 1)), PrngStream(0))
        state = AdamState.zeros_like(params)
        with pytest.raises(DivergenceError):
            adam_step(state, params, _grads_like(params, np.nan), TrainConfig())


class TestTrain:
    def test_fits_collinear_points(self):
        ds = _line_dataset()
        cfg = TrainConfig(epochs=2000, batch_fraction=1.0)
        _, trace = train(ds, NetworkShape((1, 8, 1)), LossSpec("ls"), cfg, PrngStream(7))
        assert trace.losses[-1] < 1e-3
        assert len(trace.losses) == 2000

    def test_descent_tendency(self):
        ds = _line_dataset()
        cfg = TrainConfig(epochs=600, batch_fraction=1.0)
        _, trace = train(ds, NetworkShape((1, 8, 1)), LossSpec("ls"), cfg, PrngStream(3))
        head = np.mean(trace.losses[:100])
        tail = np.mean(trace.losses[-100:])
        assert tail <= head

    def test_same_seed_same_trace(self):
        ds = _line_dataset()
        cfg = TrainConfig(epochs=450)
        p1, t1 = train(ds, NetworkShape((1, 6, 1)), LossSpec("huber", 1.345), cfg,
                       PrngStream(21))
        p2, t2 = train(ds, NetworkShape((1, 6, 1)), LossSpec("huber", 1.345), cfg,
                       PrngStream(21))
        assert t1.losses == t2.losses
        for a, b in zip((*p1.weights, *p1.biases), (*p2.weights, *p2.biases)):
            assert np.array_equal(a, b)

    def test_full_batch_single_step_matches_backward(self):
        ds = _line_dataset()
        shape = NetworkShape((1, 5, 1))
        cfg = TrainConfig(epochs=1, batch_fraction=1.0, allow_short_epochs=True)
        rng = PrngStream(31)
        params_trained, trace = train(ds, shape, LossSpec("ls"), cfg, rng)

        # replay by hand: same init stream, one Adam step on the full-batch gradient
        rng2 = PrngStream(31)
        params0 = init_network(shape, rng2)
        rng2.permutation(ds.n)  # the shuffle that train() consumed
        risk, grads = backward(params0, ds.xs, ds.ys, LossSpec("ls"))
        state = AdamState.zeros_like(params0)
        _, params_manual = adam_step(state, params0, grads, cfg)
        assert trace.losses == [risk]
        for a, b in zip((*params_trained.weights, *params_trained.biases),
                        (*params_manual.weights, *params_manual.biases)):
            assert np.array_equal(a, b)

    def test_batch_remainder_covers_all_points(self):
        # n=5 with fraction 1/2 -> batches of 3 and 2; run just to make sure
        xs = np.linspace(0, 1, 5)[:, None]
        ds = Dataset(xs=xs, ys=xs[:, 0], provenance={})
        cfg = TrainConfig(epochs=5, batch_fraction=0.5, allow_short_epochs=True)
        _, trace = train(ds, NetworkShape((1, 4, 1)), LossSpec("lad"), cfg, PrngStream(2))
        assert len(trace.losses) == 5
        assert all(np.isfinite(v) for v in trace.losses)

    def test_dim_mismatch(self):
        ds = _line_dataset()
        with pytest.raises(ValueError, match="d="):
            train(ds, NetworkShape((2, 4, 1)), LossSpec("ls"),
                  TrainConfig(epochs=400), PrngStream(0))

    def test_divergence_carries_epoch(self):
        # squared error overflows to inf on targets of order 1e200
        xs = np.array([[0.0], [1.0]])
        ds = Dataset(xs=xs, ys=np.array([1e200, -1e200]), provenance={})
        cfg = TrainConfig(epochs=50, batch_fraction=1.0, allow_short_epochs=True)
        with pytest.raises(DivergenceError) as err:
            train(ds, NetworkShape((1, 3, 1)), LossSpec("ls"), cfg, PrngStream(1))
        assert err.value.epoch == 1

    def test_hook_sees_every_epoch(self):
        ds = _line_dataset()
        seen = []
        cfg = TrainConfig(epochs=7, batch_fraction=1.0, allow_short_epochs=True)
        train(ds, NetworkShape((1, 3, 1)), LossSpec("ls"), cfg, PrngStream(4),
              hook=lambda epoch, params, loss: seen.append(epoch))
        assert seen == list(range(1, 8))

    def test_trace_csv(self, tmp_path):
        ds = _line_dataset()
        cfg = TrainConfig(epochs=3, batch_fraction=1.0, allow_short_epochs=True)
        _, trace = train(ds, NetworkShape((1, 3, 1)), LossSpec("ls"), cfg, PrngStream(4))
        path = tmp_path / "trace.csv"
        trace.to_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "epoch,loss"
        assert len(lines) == 4
        assert float(lines[1].split(",")[1]) == trace.losses[0]
