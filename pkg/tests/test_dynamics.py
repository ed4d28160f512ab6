import math

import numpy as np
import pytest

from dynamics.dubins import build_model, dubins_model
from dynamics.system import (
    ControlSequence,
    SystemModel,
    effort_cost,
    eval_control,
    integrate_backward,
    integrate_forward,
    propagate_batch,
    sequence_cost,
)
from utils.errors import ConfigurationError, DomainError, IntegrationError
from utils.helpers import make_rng


class TestControlSequence:
    def test_rejects_mismatched_lengths(self):
        with pytest.raises(DomainError):
            ControlSequence((1.0, 0.0), (1.0,))

    def test_rejects_negative_duration(self):
        with pytest.raises(DomainError):
            ControlSequence((1.0,), (-0.5,))

    def test_boundaries_run_from_minus_total_to_zero(self):
        seq = ControlSequence((1.0, 0.0), (2.0, 3.0))
        np.testing.assert_allclose(seq.boundaries(), [-5.0, -3.0, 0.0])

    def test_split_at_keeps_the_control_function(self):
        seq = ControlSequence((1.0, -1.0), (2.0, 3.0))
        refined, positions = seq.split_at([-4.0, -1.0])
        assert refined.total_duration == pytest.approx(5.0)
        np.testing.assert_allclose(refined.boundaries()[positions], [-4.0, -1.0])
        for t in np.linspace(-5.0, 0.0, 41):
            assert eval_control(refined, t) == eval_control(seq, t)

    def test_tail_inside_a_segment(self):
        seq = ControlSequence((1.0, 0.0), (2.0, 3.0))
        tail = seq.tail(4.0)
        assert tail.primitives == (1.0, 0.0)
        np.testing.assert_allclose(tail.durations, (1.0, 3.0))

    def test_tail_on_a_boundary(self):
        seq = ControlSequence((1.0, 0.0), (2.0, 3.0))
        tail = seq.tail(3.0)
        assert tail.primitives == (0.0,)
        np.testing.assert_allclose(tail.durations, (3.0,))

    def test_concat(self):
        joined = ControlSequence((1.0,), (1.0,)).concat(ControlSequence((0.0,), (2.0,)))
        assert joined.primitives == (1.0, 0.0)
        assert joined.total_duration == pytest.approx(3.0)


class TestEvalControl:
    seq = ControlSequence((1.0, -1.0), (2.0, 3.0))

    def test_later_segment_wins_at_interior_switch(self):
        assert eval_control(self.seq, -3.0) == -1.0

    def test_zero_maps_to_last_primitive(self):
        assert eval_control(self.seq, 0.0) == -1.0

    def test_start_of_domain(self):
        assert eval_control(self.seq, -5.0) == 1.0
        assert eval_control(self.seq, -4.0) == 1.0

    def test_leading_zero_duration_segment_is_skipped(self):
        seq = ControlSequence((1.0, 0.0, -1.0), (0.0, 2.0, 2.0))
        assert eval_control(seq, -4.0) == 0.0

    @pytest.mark.parametrize("t", [0.1, -5.1])
    def test_outside_domain(self, t):
        with pytest.raises(DomainError):
            eval_control(self.seq, t)

    def test_empty_sequence(self):
        with pytest.raises(DomainError):
            eval_control(ControlSequence(), 0.0)


class TestSequenceCost:
    def test_unit_cost_is_duration(self):
        assert sequence_cost(ControlSequence((1.0, 0.0), (2.0, 3.0))) == pytest.approx(5.0)

    def test_effort_cost(self):
        seq = ControlSequence((1.0, 0.0), (2.0, 3.0))
        assert sequence_cost(seq, effort_cost) == pytest.approx(7.0)


class TestIntegrateForward:
    def test_straight_line_reaches_origin(self, dubins):
        traj = integrate_forward(dubins, (-10.0, 0.0, 0.0), ControlSequence((0.0,), (10.0,)))
        np.testing.assert_allclose(traj.end, (0.0, 0.0, 0.0), atol=1e-9)

    def test_quarter_turn(self, dubins, quarter_turn):
        traj = integrate_forward(dubins, (0.0, 0.0, 0.0), quarter_turn)
        np.testing.assert_allclose(traj.end, (1.0, 1.0, math.pi / 2), atol=1e-6)

    def test_times_cover_the_domain(self, dubins):
        seq = ControlSequence((1.0, 0.0), (0.333, 0.5))
        traj = integrate_forward(dubins, (0.0, 0.0, 0.0), seq)
        assert traj.times[0] == pytest.approx(-0.833)
        assert traj.times[-1] == 0.0
        assert np.all(np.diff(traj.times) > 0.0)

    def test_steps_land_on_switch_times(self, dubins):
        seq = ControlSequence((1.0, 0.0), (0.333, 0.5))
        traj = integrate_forward(dubins, (0.0, 0.0, 0.0), seq)
        assert np.min(np.abs(traj.times - (-0.5))) < 1e-12

    def test_non_finite_state_raises(self):
        model = SystemModel("blowup", 1, (0.0,), lambda x, u: np.full_like(x, np.inf), (0.0, 0.0), ("x",))
        with pytest.raises(IntegrationError):
            integrate_forward(model, (1.0,), ControlSequence((0.0,), (1.0,)))

    def test_rk4_error_shrinks_with_fourth_order(self, dubins):
        circle = ControlSequence((1.0,), (2.0 * math.pi,))
        errors = [np.linalg.norm(integrate_forward(dubins, (0.0, 0.0, 0.0), circle, dt).end[:2])
                  for dt in (0.2, 0.1)]
        assert errors[0] / errors[1] >= 8.0

    def test_full_circle_returns_to_start(self, dubins):
        traj = integrate_forward(dubins, (0.0, 0.0, 0.0), ControlSequence((1.0,), (2.0 * math.pi,)))
        assert dubins.metric.distance(traj.end, (0.0, 0.0, 0.0)) <= 1e-6

    def test_straight_segment_moves_one_step_per_step(self, dubins):
        traj = integrate_forward(dubins, (0.0, 0.0, 0.0), ControlSequence((0.0,), (3.0,)), 0.1)
        np.testing.assert_allclose(np.diff(traj.states[:, 0]), np.diff(traj.times), atol=1e-12)
        np.testing.assert_allclose(traj.states[:, 1:], 0.0, atol=1e-12)


class TestIntegrateBackward:
    def test_forward_replay_returns_to_target(self, dubins):
        seq = ControlSequence((1.0, 0.0, -1.0), (1.3, 2.0, 0.7))
        back = integrate_backward(dubins, (0.0, 0.0, 0.0), seq)
        forward = integrate_forward(dubins, back.end, seq)
        np.testing.assert_allclose(forward.end, (0.0, 0.0, 0.0), atol=1e-6)

    def test_left_quarter_turn_backward(self, dubins, quarter_turn):
        back = integrate_backward(dubins, (0.0, 0.0, 0.0), quarter_turn)
        np.testing.assert_allclose(back.end, (-1.0, 1.0, -math.pi / 2), atol=1e-6)

    def test_random_round_trips(self, dubins):
        rng = make_rng(31)
        for _ in range(20):
            seq = ControlSequence(tuple(float(u) for u in rng.choice((-1.0, 0.0, 1.0), size=3)),
                                  tuple(float(t) for t in rng.uniform(0.0, 3.0, size=3)))
            target = rng.uniform(-5.0, 5.0, size=3)
            back = integrate_backward(dubins, target, seq)
            forward = integrate_forward(dubins, back.end, seq)
            assert dubins.metric.distance(forward.end, target) <= 1e-5

    def test_elapsed_time_axis(self, dubins):
        seq = ControlSequence((0.0,), (2.5,))
        back = integrate_backward(dubins, (0.0, 0.0, 0.0), seq)
        assert back.times[0] == 0.0
        assert back.times[-1] == 2.5
        np.testing.assert_allclose(back.start, (0.0, 0.0, 0.0))
        np.testing.assert_allclose(back.end, (-2.5, 0.0, 0.0), atol=1e-12)


class TestPropagateBatch:
    def test_batch_matches_single_runs(self, dubins):
        sequences = [ControlSequence((1.0, 0.0), (0.75, 1.2)),
                     ControlSequence((-1.0,), (2.05,)),
                     ControlSequence((0.0, 1.0, -1.0), (0.4, 0.4, 0.4))]
        starts = np.array([[0.0, 0.0, 0.0], [1.0, -1.0, 0.5], [-2.0, 3.0, -1.0]])
        boundaries = propagate_batch(dubins, starts, sequences)
        for row, (start, seq) in enumerate(zip(starts, sequences)):
            single = integrate_forward(dubins, start, seq)
            np.testing.assert_allclose(boundaries[row, len(seq)], single.end, atol=1e-12)

    def test_backward_rows_of_different_length(self, dubins):
        sequences = [ControlSequence((1.0,), (1.0,)), ControlSequence((0.0, -1.0), (1.0, 1.5))]
        boundaries = propagate_batch(dubins, (0.0, 0.0, 0.0), sequences, backward=True)
        for row, seq in enumerate(sequences):
            back = integrate_backward(dubins, (0.0, 0.0, 0.0), seq)
            np.testing.assert_allclose(boundaries[row, 0], back.end, atol=1e-12)
            np.testing.assert_allclose(boundaries[row, len(seq)], (0.0, 0.0, 0.0))


class TestDubinsModel:
    def test_vector_field(self, dubins):
        np.testing.assert_allclose(dubins.f((0.0, 0.0, math.pi / 2), 1.0), (0.0, 1.0, 1.0), atol=1e-15)

    def test_turn_radius_parameter(self):
        model = dubins_model(speed=2.0, max_turn=0.5)
        assert model.parameters["turn_radius"] == pytest.approx(4.0)

    def test_rejects_non_positive_speed(self):
        with pytest.raises(ConfigurationError):
            dubins_model(speed=0.0)

    def test_unknown_model_name(self):
        with pytest.raises(ConfigurationError):
            build_model("unicycle")
