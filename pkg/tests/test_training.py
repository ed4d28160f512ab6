import math

import numpy as np
import pytest

from data_pipeline.dynamic_training import (
    EXPLOIT,
    EXPLORE,
    GUIDE,
    DynamicParams,
    FilterSchedule,
    TrainingSettings,
    TrainState,
    dynamic_step,
    load_snapshot,
    run_training,
)
from data_pipeline.filters import FilterParams
from data_pipeline.regions import PointSet, Sphere, WholeSpace
from data_pipeline.samples import FEASIBILITY_TOL, Sample, certify_samples, replay_errors
from data_pipeline.warmup import (
    gen_query_set,
    gen_warmup,
    inject_suboptimal,
    plant_step_pairs,
    random_sequences,
)
from dynamics.system import ControlSequence, integrate_backward
from ml_layer.config import NetConfig
from ml_layer.models.inverse_dynamics import forward, init_weights
from tests.conftest import ORIGIN, make_samples
from utils.errors import ArgumentError, FeasibilityError, GenerationError, TrainingLoopError
from utils.helpers import make_rng
from utils.io import read_iteration_log

CODEBOOK = (-1.0, 0.0, 1.0)


@pytest.fixture
def tiny_cfg():
    return NetConfig(recurrence_depth=3, layer_widths=(5, 5, 3, 6), max_duration=20.0,
                     control_sample_step=0.5)


@pytest.fixture
def tiny_settings():
    return TrainingSettings(query_count=20, d1_samples=8, d1_max_duration=5.0, pair_times=4,
                            d2_samples=12, plant_epochs=3, warmup_epochs=3, retrain_epochs=2,
                            max_iterations=3, stop_streak=100)


class TestFilterSchedule:
    schedule = FilterSchedule()
    cone, sphere = object(), object()

    def test_phase_boundaries(self):
        assert self.schedule.phase(0) == EXPLORE
        assert self.schedule.phase(29) == EXPLORE
        assert self.schedule.phase(30) == GUIDE
        assert self.schedule.phase(79) == GUIDE
        assert self.schedule.phase(80) == EXPLOIT

    def test_explore_uses_cone_for_both(self):
        old, old_lam, new, new_lam = self.schedule.regions(5, self.cone, self.sphere)
        assert old is self.cone and new is self.cone
        assert old_lam == new_lam == pytest.approx(0.25)

    def test_guide_ramps_sphere_lambda(self):
        _, old_lam, new, lam30 = self.schedule.regions(30, self.cone, self.sphere)
        assert new is self.sphere
        assert old_lam == pytest.approx(0.5)
        assert lam30 == pytest.approx(0.2)
        assert self.schedule.regions(45, self.cone, self.sphere)[3] == pytest.approx(0.3)
        assert self.schedule.regions(79, self.cone, self.sphere)[3] == pytest.approx(0.2 * 1.5 ** 4)

    def test_exploit_uses_sphere_for_both(self):
        old, old_lam, new, new_lam = self.schedule.regions(120, self.cone, self.sphere)
        assert old is self.sphere and new is self.sphere
        assert old_lam == new_lam == pytest.approx(1.0)


class TestSamples:
    def test_certified_samples_carry_cost(self, dubins, quarter_turn):
        samples = make_samples(dubins, [quarter_turn, ControlSequence((0.0, -1.0), (2.0, 1.0))])
        assert [s.cost for s in samples] == pytest.approx([math.pi / 2, 3.0])
        assert all(s.certificate_error <= FEASIBILITY_TOL for s in samples)

    def test_replay_error_of_wrong_state(self, dubins, quarter_turn):
        errors = replay_errors(dubins, [(0.0, 0.0, 0.0)], [quarter_turn], ORIGIN)
        assert errors[0] > 1.0

    def test_strict_certification_raises(self, dubins, quarter_turn):
        with pytest.raises(FeasibilityError):
            certify_samples(dubins, [(3.0, 0.0, 0.0)], [quarter_turn], ORIGIN)

    def test_lenient_certification_drops(self, dubins, quarter_turn):
        good = make_samples(dubins, [quarter_turn])[0]
        kept = certify_samples(dubins, [good.state, (3.0, 0.0, 0.0)], [quarter_turn, quarter_turn],
                               ORIGIN, strict=False)
        assert len(kept) == 1
        np.testing.assert_allclose(kept[0].state, good.state)

    def test_controls_outside_bounds_are_rejected(self, dubins):
        fast_turn = ControlSequence((2.0,), (0.5,))
        state = integrate_backward(dubins, ORIGIN, fast_turn).end
        with pytest.raises(FeasibilityError):
            certify_samples(dubins, [state], [fast_turn], ORIGIN)

    def test_sample_requires_certificate(self, quarter_turn):
        with pytest.raises(FeasibilityError):
            Sample(np.zeros(3), quarter_turn, 1.0, certificate_error=0.5)


class TestWarmup:
    def test_random_sequences_use_codebook(self, rng):
        sequences = random_sequences(50, CODEBOOK, 2.0, 3, rng)
        assert all(len(s) == 3 for s in sequences)
        assert all(u in CODEBOOK for s in sequences for u in s.primitives)
        assert all(0.0 <= d <= 2.0 for s in sequences for d in s.durations)

    def test_gen_warmup_returns_feasible_samples(self, dubins, rng):
        samples = gen_warmup(dubins, WholeSpace(), 0.05, 25, 3.0, CODEBOOK, rng, ORIGIN)
        assert len(samples) == 25
        assert max(s.certificate_error for s in samples) <= FEASIBILITY_TOL
        assert all(s.control.total_duration <= 9.0 + 1e-9 for s in samples)

    def test_gen_warmup_stalls_on_unreachable_region(self, dubins, rng):
        far = Sphere((1000.0, 0.0, 0.0), 1.0, dubins.metric)
        with pytest.raises(GenerationError):
            gen_warmup(dubins, far, math.inf, 5, 1.0, CODEBOOK, rng, ORIGIN, stall_limit=50)

    def test_gen_warmup_rejects_zero_count(self, dubins, rng):
        with pytest.raises(ArgumentError):
            gen_warmup(dubins, WholeSpace(), 0.05, 0, 1.0, CODEBOOK, rng, ORIGIN)

    def test_query_set_inside_ball(self, dubins, rng):
        x_bar = np.array([-10.0, 0.0, 0.0])
        query = gen_query_set(x_bar, 1.0, 200, rng, dubins.metric)
        assert query.shape == (200, 3)
        assert np.all(dubins.metric.distance(query, x_bar) <= 1.0)

    def test_query_set_across_heading_seam(self, dubins, rng):
        x_bar = np.array([0.0, 0.0, math.pi])
        query = gen_query_set(x_bar, 0.5, 100, rng, dubins.metric)
        assert np.all(dubins.metric.distance(query, x_bar) <= 0.5)

    def test_injected_copies_cost_one_loop_more(self, dubins, rng, quarter_turn):
        base = make_samples(dubins, [quarter_turn, ControlSequence((0.0,), (3.0,)),
                                     ControlSequence((-1.0,), (1.0,)), ControlSequence((0.0,), (1.0,))])
        extended = inject_suboptimal(dubins, base, 0.5, rng, ORIGIN)
        assert len(extended) == 6
        base_costs = sorted(s.cost for s in base)
        for extra in extended[4:]:
            assert extra.control.primitives[0] == 1.0
            assert any(extra.cost == pytest.approx(c + 2 * math.pi) for c in base_costs)

    def test_plant_pairs_follow_straight_trajectory(self, dubins, rng, straight_samples):
        controls, states = plant_step_pairs(dubins, straight_samples, 20, 3, rng, ORIGIN)
        assert controls.shape == (20, 3)
        assert states.shape == (20, 3)
        np.testing.assert_allclose(controls[:, 0], 0.0)
        assert np.all((controls[:, 1] > 0.0) & (controls[:, 1] <= 0.01 + 1e-12))
        np.testing.assert_allclose(states[:, 1:], 0.0, atol=1e-9)
        assert np.all((states[:, 0] >= -12.0 - 1e-9) & (states[:, 0] <= 0.0))

    def test_plant_pairs_need_samples(self, dubins, rng):
        with pytest.raises(ArgumentError):
            plant_step_pairs(dubins, [], 5, 3, rng, ORIGIN)


class TestRunTraining:
    def test_small_run_writes_log_and_snapshot(self, dubins, tiny_cfg, tiny_settings, tmp_path):
        log_path = tmp_path / "iterations.jsonl"
        snapshot = tmp_path / "snapshot.joblib"
        weights, train_set = run_training(dubins, tiny_cfg, (-10.0, 0.0, 0.0), ORIGIN, FilterSchedule(),
                                          make_rng(7), tiny_settings, snapshot_path=str(snapshot),
                                          log_path=str(log_path))
        assert train_set
        assert all(s.certificate_error <= FEASIBILITY_TOL for s in train_set)
        records = read_iteration_log(str(log_path))
        assert [r["iter"] for r in records] == [0, 1, 2]
        assert all(r["phase"] == EXPLORE for r in records)
        assert load_snapshot(str(snapshot)).iteration == 3
        assert np.all(np.isfinite(weights.W_X))

    def test_resume_matches_uninterrupted_run(self, dubins, tiny_cfg, tiny_settings, tmp_path):
        snapshot = tmp_path / "snapshot.joblib"
        x_bar = (-10.0, 0.0, 0.0)
        full_weights, full_set = run_training(dubins, tiny_cfg, x_bar, ORIGIN, FilterSchedule(),
                                              make_rng(7), tiny_settings)

        tiny_settings.max_iterations = 2
        run_training(dubins, tiny_cfg, x_bar, ORIGIN, FilterSchedule(), make_rng(7), tiny_settings,
                     snapshot_path=str(snapshot))
        tiny_settings.max_iterations = 3
        weights, train_set = run_training(dubins, tiny_cfg, x_bar, ORIGIN, FilterSchedule(),
                                          make_rng(999), tiny_settings, resume=load_snapshot(str(snapshot)))

        assert len(train_set) == len(full_set)
        np.testing.assert_array_equal(np.stack([s.state for s in train_set]),
                                      np.stack([s.state for s in full_set]))
        for name, value in full_weights.as_params().items():
            np.testing.assert_array_equal(getattr(weights, name), value)


class TestDynamicStep:
    def step(self, dubins, tiny_cfg, train_set, query_set, new_region, new_lambda):
        ts = TrainState(weights=init_weights(tiny_cfg, make_rng(4)), train_set=list(train_set),
                        query_set=np.atleast_2d(query_set), iteration=0, rng=make_rng(5))
        params = DynamicParams(WholeSpace(), new_region, FilterParams(1.0, 1.0, 0.5),
                               FilterParams(new_lambda, 1.0, 0.5), epochs=0,
                               length_filter_enabled=False, phase=EXPLORE)
        return dynamic_step(ts, dubins, tiny_cfg, params, (-10.0, 0.0, 0.0), ORIGIN, dt=0.01)

    def test_network_output_lands_on_its_own_example(self, dubins, tiny_cfg):
        query = (-4.0, 1.0, 0.3)
        proposal = forward(init_weights(tiny_cfg, make_rng(4)), tiny_cfg, query)
        example = make_samples(dubins, [proposal])[0]
        region = PointSet([example.state], 1e-5, dubins.metric)

        ts = self.step(dubins, tiny_cfg, [example], query, region, math.inf)
        record = ts.log[-1]
        assert record["new_accepted"] == 1
        assert record["mean_gap_to_new_region"] <= 1e-5
        assert dubins.metric.distance(ts.train_set[-1].state, example.state) <= 1e-5
        assert ts.iteration == 1

    def test_infinite_lambda_keeps_only_endpoints_on_the_query_set(self, dubins, tiny_cfg, quarter_turn):
        old = make_samples(dubins, [quarter_turn])
        query_set = gen_query_set((-10.0, 0.0, 0.0), 1.0, 10, make_rng(2), dubins.metric)
        ts = self.step(dubins, tiny_cfg, old, query_set, PointSet(query_set, 0.0, dubins.metric), math.inf)
        assert ts.log[-1]["new_accepted"] == 0
        assert ts.log[-1]["mean_gap_to_new_region"] > 0.0
        assert len(ts.train_set) == len(old)
        assert all(kept is sample for kept, sample in zip(ts.train_set, old))

    def test_empty_training_set_is_a_loop_error(self, dubins, tiny_cfg):
        far = Sphere((100.0, 100.0, 0.0), 0.1, dubins.metric)
        with pytest.raises(TrainingLoopError) as err:
            self.step(dubins, tiny_cfg, [], (-4.0, 1.0, 0.3), far, math.inf)
        assert err.value.iteration == 0
