import json

import numpy as np
import pytest

from dynamics.system import ControlSequence
from ml_layer.config import NetConfig, RpropConfig
from ml_layer.models.inverse_dynamics import (
    InverseDynamicsNetwork,
    TrainExample,
    activation_margin,
    control_grid,
    dataset_mse,
    discretize_control,
    discretize_sequences,
    embed_states,
    forward,
    forward_batch,
    init_weights,
    mse_loss,
    relaxed_objective,
    train_full,
    train_plant,
    zero_weights,
)
from ml_layer.optim import Rprop, minimize
from utils.errors import ArgumentError, ConfigurationError


@pytest.fixture
def small_cfg():
    return NetConfig(recurrence_depth=2, layer_widths=(5, 5, 3, 6), max_duration=4.0,
                     control_sample_step=0.25)


class TestNetConfig:
    def test_defaults(self):
        cfg = NetConfig().validate()
        assert cfg.layer_widths == (10, 10, 6, 75)
        assert cfg.control_sample_step == pytest.approx(20.0 / 64)
        assert cfg.grid_size == 65

    def test_rejects_narrow_state_layer(self):
        with pytest.raises(ConfigurationError) as err:
            NetConfig(layer_widths=(10, 10, 6, 2)).validate()
        assert err.value.field == "network.layer_widths"

    def test_round_trip(self):
        cfg = NetConfig(recurrence_depth=4, rprop=RpropConfig(initial_step=0.1))
        assert NetConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg

    def test_unknown_key(self):
        with pytest.raises(ConfigurationError):
            NetConfig.from_dict({"depth": 3})


class TestForward:
    def test_returns_depth_segments_from_codebook(self, small_cfg, rng):
        w = init_weights(small_cfg, rng)
        seq = forward(w, small_cfg, (1.0, -2.0, 0.5))
        assert len(seq) == small_cfg.recurrence_depth
        assert set(seq.primitives) <= set(small_cfg.primitive_codebook)
        assert all(0.0 <= d <= small_cfg.max_duration for d in seq.durations)

    def test_zero_weights_give_zero_control(self, small_cfg):
        prims, durs = forward_batch(zero_weights(small_cfg), small_cfg, np.ones((4, 3)))
        assert np.all(prims == 0.0)
        assert np.all(durs == 0.0)

    def test_state_dimension_mismatch(self, small_cfg):
        with pytest.raises(ConfigurationError):
            embed_states(np.zeros((2, 4)), small_cfg)


class TestDiscretization:
    def test_grid_ends_at_zero(self):
        grid = control_grid(1.0, 0.3)
        np.testing.assert_allclose(grid, [-1.0, -0.7, -0.4, -0.1, 0.0])

    def test_left_padding_keeps_the_end_aligned(self):
        vec = discretize_control(ControlSequence((1.0, -1.0), (1.0, 0.5)), 2.0, 0.25)
        grid = control_grid(2.0, 0.25)
        expected = np.where(grid < -1.5, 0.0, np.where(grid < -0.5, 1.0, -1.0))
        np.testing.assert_allclose(vec, expected)

    def test_switch_instant_takes_later_segment(self):
        vec = discretize_control(ControlSequence((1.0, 0.0), (1.0, 1.0)), 2.0, 0.5)
        # grid -2, -1.5, -1, -0.5, 0
        np.testing.assert_allclose(vec, [1.0, 1.0, 0.0, 0.0, 0.0])

    def test_mse_loss(self):
        a = ControlSequence((1.0,), (2.0,))
        b = ControlSequence((-1.0,), (2.0,))
        assert mse_loss(a, b, 2.0, 0.5) == pytest.approx(4.0)
        assert mse_loss(a, a, 2.0, 0.5) == 0.0


class TestRelaxedGradient:
    def test_backprop_matches_finite_differences(self, small_cfg):
        rng = np.random.default_rng(7)
        states = rng.uniform(-2.0, 2.0, size=(4, 3))
        targets_seq = [ControlSequence((1.0, 0.0), (1.0, 1.5)),
                       ControlSequence((-1.0,), (3.0,)),
                       ControlSequence((0.0, 1.0), (0.5, 0.5)),
                       ControlSequence((1.0, -1.0), (2.0, 1.0))]
        targets = discretize_sequences(targets_seq, small_cfg.max_duration, small_cfg.control_sample_step)
        X0 = embed_states(states, small_cfg)

        # draw weights until every unit and duration clamp is away from its kink
        for _ in range(200):
            w = init_weights(small_cfg, rng)
            if activation_margin(w, small_cfg, states) > 1e-3:
                break
        params = w.as_params()
        _, grads = relaxed_objective(params, small_cfg, X0, targets, snap=False)

        eps = 1e-6
        for name, value in params.items():
            for idx in np.ndindex(value.shape):
                plus = {k: v.copy() for k, v in params.items()}
                minus = {k: v.copy() for k, v in params.items()}
                plus[name][idx] += eps
                minus[name][idx] -= eps
                numeric = (relaxed_objective(plus, small_cfg, X0, targets, snap=False)[0]
                           - relaxed_objective(minus, small_cfg, X0, targets, snap=False)[0]) / (2 * eps)
                analytic = grads[name][idx]
                assert abs(numeric - analytic) <= 1e-4 * max(1.0, abs(numeric), abs(analytic)), (name, idx)


class TestRprop:
    def test_quadratic_converges_and_history_never_increases(self):
        target = np.array([1.0, -2.0, 3.0])

        def loss_and_grad(p):
            diff = p["x"] - target
            return float(diff @ diff), {"x": 2.0 * diff}

        params, history = minimize(loss_and_grad, {"x": np.zeros(3)}, 200)
        assert len(history) == 201
        assert all(b <= a for a, b in zip(history, history[1:]))
        np.testing.assert_allclose(params["x"], target, atol=1e-2)

    def test_step_sizes_stay_within_bounds(self):
        cfg = RpropConfig(initial_step=0.1, min_step=1e-3, max_step=0.5)
        target = np.array([3.0, -2.0, 0.5])
        params = {"w": np.zeros(3)}
        optimizer = Rprop(params, cfg)
        for epoch in range(200):
            candidate = optimizer.propose(params, {"w": 2.0 * (params["w"] - target)})
            if epoch % 7 == 3:
                optimizer.reject()
            else:
                optimizer.commit()
                params = candidate
            low, high = optimizer.step_range()
            assert cfg.min_step <= low and high <= cfg.max_step


class TestTraining:
    def test_train_full_lowers_the_objective(self, small_cfg, rng):
        w = init_weights(small_cfg, rng)
        dataset = [TrainExample(np.array([1.0, 0.0, 0.0]), ControlSequence((0.0,), (1.0,))),
                   TrainExample(np.array([-1.0, 1.0, 0.5]), ControlSequence((1.0, 0.0), (1.0, 1.0)))]
        history = []
        trained, loss = train_full(w, small_cfg, dataset, 30, history=history)
        assert len(history) == 31
        assert loss == history[-1] <= history[0]
        assert dataset_mse(trained, small_cfg, dataset) >= 0.0

    def test_zero_epochs_leave_weights_unchanged(self, small_cfg, rng):
        w = init_weights(small_cfg, rng)
        dataset = [TrainExample(np.zeros(3), ControlSequence((1.0,), (1.0,)))]
        trained, _ = train_full(w, small_cfg, dataset, 0)
        assert trained.equals(w)

    def test_examples_beyond_horizon_are_skipped(self, small_cfg, rng):
        w = init_weights(small_cfg, rng)
        too_long = [TrainExample(np.zeros(3), ControlSequence((1.0,), (10.0,)))]
        with pytest.raises(ArgumentError):
            train_full(w, small_cfg, too_long, 1)

    def test_empty_dataset(self, small_cfg, rng):
        with pytest.raises(ArgumentError):
            train_full(init_weights(small_cfg, rng), small_cfg, [], 1)

    def test_train_plant_only_touches_plant_layer(self, small_cfg, rng):
        w = init_weights(small_cfg, rng)
        controls = rng.uniform(-1.0, 1.0, size=(20, small_cfg.width_u))
        next_states = rng.uniform(0.0, 1.0, size=(20, 3))
        fitted, history = train_plant(w, small_cfg, controls, next_states, 20)
        assert history[-1] <= history[0]
        np.testing.assert_array_equal(fitted.W_P, w.W_P)
        np.testing.assert_array_equal(fitted.b_L, w.b_L)

    def test_train_plant_needs_pairs(self, small_cfg, rng):
        with pytest.raises(ArgumentError):
            train_plant(init_weights(small_cfg, rng), small_cfg, np.zeros((0, small_cfg.width_u)),
                        np.zeros((0, 3)), 1)


class TestPersistence:
    def test_save_and_load(self, small_cfg, rng, tmp_path):
        network = InverseDynamicsNetwork(small_cfg, init_weights(small_cfg, rng),
                                         model_path=str(tmp_path / "weights.json"))
        path = network.save()
        restored = InverseDynamicsNetwork.from_file(path)
        assert restored.cfg == small_cfg
        assert restored.weights.equals(network.weights)

    def test_predict_matches_forward(self, small_cfg, rng):
        network = InverseDynamicsNetwork(small_cfg, init_weights(small_cfg, rng))
        states = np.array([[0.5, 0.5, 0.0], [-1.0, 2.0, 1.0]])
        predicted = network.predict(states)
        single = forward(network.weights, small_cfg, states[1])
        assert predicted[1].primitives == single.primitives
        np.testing.assert_allclose(predicted[1].durations, single.durations, atol=1e-12)
