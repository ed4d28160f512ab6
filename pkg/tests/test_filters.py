import math
from dataclasses import dataclass

import numpy as np
import pytest

from config import RunConfig
from data_pipeline.dynamic_training import TrainingSettings
from data_pipeline.filters import (
    FilterParams,
    exp_filter,
    exp_filter_mask,
    length_filter,
    removal_probability,
)
from data_pipeline.regions import Sphere, WholeSpace
from utils.errors import ArgumentError
from utils.geometry import StateMetric
from utils.helpers import make_rng

METRIC = StateMetric((1.0, 1.0, 1.0), (2,))


@dataclass(eq=False)
class Point:
    state: np.ndarray
    cost: float


class TestExpFilter:
    def test_inside_region_always_kept(self, rng):
        region = Sphere((0.0, 0.0, 0.0), 1.0, METRIC)
        assert all(exp_filter((0.2, 0.1, 0.0), region, 50.0, rng) for _ in range(1000))

    def test_infinite_lambda_rejects_outside(self, rng):
        region = Sphere((0.0, 0.0, 0.0), 1.0, METRIC)
        assert not any(exp_filter((3.0, 0.0, 0.0), region, math.inf, rng) for _ in range(100))
        assert exp_filter((0.5, 0.0, 0.0), region, math.inf, rng)

    def test_acceptance_rate_matches_exponential(self):
        rng = make_rng(42)
        region = Sphere((0.0, 0.0, 0.0), 1.0, METRIC)
        outside = (1.0 + math.log(4.0), 0.0, 0.0)
        trials = 10_000
        kept = sum(exp_filter(outside, region, 1.0, rng) for _ in range(trials))
        assert abs(kept / trials - 0.25) <= 0.02

    @pytest.mark.parametrize("gap", [0.5, 1.0, 2.0])
    def test_batch_acceptance_rate_at_fixed_distance(self, gap):
        region = Sphere((0.0, 0.0, 0.0), 1.0, METRIC)
        states = np.tile((1.0 + gap, 0.0, 0.0), (100_000, 1))
        kept = exp_filter_mask(states, region, 1.0, make_rng(17))
        assert abs(kept.mean() - math.exp(-gap)) <= 0.01

    def test_one_draw_per_call(self):
        a, b = make_rng(3), make_rng(3)
        exp_filter((5.0, 0.0, 0.0), WholeSpace(), 1.0, a)
        b.random()
        assert a.random() == b.random()

    def test_mask_matches_sequential_calls(self):
        region = Sphere((0.0, 0.0, 0.0), 0.5, METRIC)
        states = make_rng(9).uniform(-3.0, 3.0, size=(200, 3))
        mask = exp_filter_mask(states, region, 0.7, make_rng(5))
        seq_rng = make_rng(5)
        sequential = [exp_filter(s, region, 0.7, seq_rng) for s in states]
        np.testing.assert_array_equal(mask, sequential)

    def test_rejects_non_positive_lambda(self, rng):
        with pytest.raises(ArgumentError):
            exp_filter((0.0, 0.0, 0.0), WholeSpace(), 0.0, rng)


class TestLengthFilter:
    def test_costly_twin_is_removed_preferentially(self):
        rng = make_rng(11)
        trials = 10_000
        cheap_removed = costly_removed = 0
        for _ in range(trials):
            cheap = Point(np.array([1.0, 2.0, 0.5]), 1.0)
            costly = Point(np.array([1.0, 2.0, 0.5]), 100.0)
            survivors = length_filter([costly, cheap], 1.0, 0.5, rng, METRIC)
            cheap_removed += cheap not in survivors
            costly_removed += costly not in survivors
        assert costly_removed / trials > 0.95
        assert cheap_removed / trials < 0.40

    def test_removal_frequencies_follow_removal_probability(self):
        rng = make_rng(12)
        trials = 10_000
        cheap_removed = costly_removed = 0
        for _ in range(trials):
            cheap = Point(np.array([0.0, 0.0, 0.0]), 0.5)
            costly = Point(np.array([0.1, 0.0, 0.0]), 2.0)
            survivors = length_filter([cheap, costly], 1.0, 0.5, rng, METRIC)
            cheap_removed += cheap not in survivors
            costly_removed += costly not in survivors
        # the cheap sample only faces removal when its costly neighbour survived its own test
        p_costly, p_cheap = removal_probability(2.0, 1.0), removal_probability(0.5, 1.0)
        assert costly_removed / trials == pytest.approx(p_costly, abs=0.02)
        assert cheap_removed / trials == pytest.approx((1.0 - p_costly) * p_cheap, abs=0.01)

    def test_isolated_samples_survive(self, rng):
        samples = [Point(np.array([float(k), 0.0, 0.0]), 10.0) for k in range(5)]
        assert length_filter(samples, 1.0, 0.5, rng, METRIC) == samples

    def test_survivors_keep_original_order(self):
        rng = make_rng(21)
        samples = [Point(np.array([10.0, 0.0, 0.0]), 3.0), Point(np.array([0.0, 0.0, 0.0]), 9.0),
                   Point(np.array([5.0, 0.0, 0.0]), 1.0), Point(np.array([0.05, 0.0, 0.0]), 0.1)]
        survivors = length_filter(samples, 1.0, 0.5, rng, METRIC)
        assert samples[1] not in survivors
        assert survivors == [samples[0], samples[2], samples[3]]

    def test_neighbourhood_wraps_heading(self):
        rng = make_rng(0)
        removed = 0
        for _ in range(200):
            a = Point(np.array([0.0, 0.0, math.pi - 0.05]), 0.1)
            b = Point(np.array([0.0, 0.0, -math.pi + 0.05]), 8.0)
            removed += b not in length_filter([a, b], 1.0, 0.5, rng, METRIC)
        assert removed > 190

    def test_empty(self, rng):
        assert length_filter([], 1.0, 0.5, rng, METRIC) == []

    def test_removal_probability(self):
        assert removal_probability(0.0, 1.0) == 0.0
        assert removal_probability(2.0, 0.5) == pytest.approx(1.0 - math.exp(-1.0))


class TestFilterParams:
    def test_requires_positive_values(self):
        with pytest.raises(ArgumentError):
            FilterParams(lam=1.0, lambda_cost=0.0, neighbourhood=0.5)

    def test_training_settings_build_filter_params(self):
        settings = TrainingSettings(lambda_cost=2.0, neighbourhood=0.25)
        assert settings.filter_params(0.5) == FilterParams(lam=0.5, lambda_cost=2.0, neighbourhood=0.25)

    def test_run_config_filters_reach_training(self):
        rc = RunConfig.from_dict({"filters": {"lambda_cost": 3.0, "neighbourhood": 0.75}})
        params = rc.training_settings().filter_params(math.inf)
        assert (params.lambda_cost, params.neighbourhood) == (3.0, 0.75)
