"""
Warm-up data: random backward trajectories from the target kept by the
exponential filter, the query set around the desired state, and one-step
transition pairs for the plant layer.
"""
import logging
import math
from typing import Callable, List, Sequence, Tuple

import numpy as np

from data_pipeline.filters import exp_filter_mask
from data_pipeline.regions import AcceptRegion
from data_pipeline.samples import Sample, certify_samples
from dynamics.system import (
    DEFAULT_DT,
    ControlSequence,
    SystemModel,
    eval_control,
    integrate_backward,
    propagate_batch,
    unit_cost,
)
from utils.errors import ArgumentError, GenerationError
from utils.geometry import StateMetric

logger = logging.getLogger(__name__)

STALL_LIMIT = 10**6


def random_sequences(count: int, codebook: Sequence[float], max_duration: float, segments: int,
                     rng: np.random.Generator) -> List[ControlSequence]:
    """Primitives uniform over the codebook, durations uniform in [0, max_duration]."""
    codebook = np.asarray(codebook, dtype=float)
    primitives = codebook[rng.integers(0, len(codebook), size=(count, segments))]
    durations = rng.uniform(0.0, max_duration, size=(count, segments))
    return [ControlSequence(tuple(p), tuple(d)) for p, d in zip(primitives, durations)]


def gen_warmup(model: SystemModel, region: AcceptRegion, lam: float, count: int,
               max_duration: float, codebook: Sequence[float], rng: np.random.Generator,
               x_target, segments: int = 3, dt: float = DEFAULT_DT,
               cost_fn: Callable[[float], float] = unit_cost, batch_size: int = 256,
               stall_limit: int = STALL_LIMIT) -> List[Sample]:
    """
    Accept-reject generation of feasible samples.

    Random sequences are integrated backward from ``x_target``; the endpoint
    of each becomes a sample when the exponential filter keeps it.

    Args:
        model: System model
        region: Accept region of the filter
        lam: Filter decay rate
        count: Number of samples to return
        max_duration: Upper bound of each segment duration
        codebook: Admissible primitives
        rng: Random stream
        x_target: Target state
        segments: Segments per random sequence
        dt: Integration step
        cost_fn: Running cost
        batch_size: Candidates integrated together
        stall_limit: Consecutive rejections before giving up

    Returns:
        Exactly ``count`` samples in acceptance order
    """
    if count <= 0:
        raise ArgumentError(f"sample count must be positive, got {count}")
    x_target = np.asarray(x_target, dtype=float)
    accepted_states, accepted_controls = [], []
    drawn = 0
    rejected_in_a_row = 0
    while len(accepted_controls) < count:
        size = min(batch_size, count - len(accepted_controls))
        sequences = random_sequences(size, codebook, max_duration, segments, rng)
        endpoints = propagate_batch(model, x_target, sequences, dt, backward=True)[:, 0]
        keep = exp_filter_mask(endpoints, region, lam, rng)
        drawn += size
        for state, seq, kept in zip(endpoints, sequences, keep):
            if not kept:
                rejected_in_a_row += 1
                if rejected_in_a_row >= stall_limit:
                    raise GenerationError(
                        f"{rejected_in_a_row} consecutive rejections after {len(accepted_controls)} "
                        f"acceptances; enlarge the accept region or lower lambda ({lam})")
                continue
            rejected_in_a_row = 0
            accepted_states.append(state)
            accepted_controls.append(seq)
    logger.info(f"Warm-up accepted {count} of {drawn} candidates "
                f"(rate {count / drawn:.3f}, segment horizon {max_duration:.3g} s)")
    return certify_samples(model, np.asarray(accepted_states), accepted_controls, x_target, dt,
                           cost_fn)


def gen_query_set(x_bar, epsilon: float, count: int, rng: np.random.Generator,
                  metric: StateMetric) -> np.ndarray:
    """
    Uniform states in the metric ball of radius ``epsilon`` around ``x_bar``.

    Rejection sampling from the bounding box of the ball.

    Returns:
        Array (count, n)
    """
    if not epsilon > 0.0 or count <= 0:
        raise ArgumentError(f"need epsilon > 0 and count > 0, got {epsilon}, {count}")
    x_bar = np.asarray(x_bar, dtype=float)
    half_widths = epsilon / np.asarray(metric.weights, dtype=float)
    states = []
    while len(states) < count:
        box = x_bar + rng.uniform(-1.0, 1.0, size=(2 * count, len(x_bar))) * half_widths
        inside = box[metric.distance(box, x_bar) <= epsilon]
        states.extend(inside[:count - len(states)])
    return np.asarray(states)


def inject_suboptimal(model: SystemModel, samples: List[Sample], fraction: float,
                      rng: np.random.Generator, x_target, dt: float = DEFAULT_DT,
                      cost_fn: Callable[[float], float] = unit_cost) -> List[Sample]:
    """
    Add copies of random samples whose control starts with a full left loop.

    The loop is integrated backward from the sample's state, so each copy is
    feasible but costs 2*pi more than needed.
    """
    extra = int(round(fraction * len(samples)))
    if extra <= 0:
        return samples
    loop = ControlSequence((max(model.control_set),), (2.0 * math.pi / model.parameters.get("max_turn", 1.0),))
    picks = rng.choice(len(samples), size=extra, replace=False)
    states, sequences = [], []
    for i in sorted(picks):
        base = samples[i]
        states.append(integrate_backward(model, base.state, loop, dt).end)
        sequences.append(loop.concat(base.control))
    logger.info(f"Injected {extra} looped samples")
    return samples + certify_samples(model, np.asarray(states), sequences, x_target, dt, cost_fn)


def plant_step_pairs(model: SystemModel, samples: Sequence[Sample], times_per_sample: int,
                     width_u: int, rng: np.random.Generator, x_target,
                     dt: float = DEFAULT_DT) -> Tuple[np.ndarray, np.ndarray]:
    """
    Slice warm-up trajectories into one-step backward transitions.

    For each sample, random instants t are drawn on its backward trajectory;
    each pair holds U = (u, h, 0, ...) for the control u held over
    [t - h, t] and the backward state reached at t - h.

    Returns:
        (controls (M, width_u), next states (M, n))
    """
    if not samples:
        raise ArgumentError("plant step pairs need at least one sample")
    controls, refined, picks = [], [], []
    for sample in samples:
        total = sample.control.total_duration
        if total <= 0.0:
            continue
        times = -rng.uniform(0.0, total, size=times_per_sample)
        h = np.minimum(dt, times + total)
        seq, positions = sample.control.split_at(np.concatenate((times - h, times)))
        starts = positions[:times_per_sample]
        for t, step, start in zip(times, h, starts):
            row = np.zeros(width_u)
            row[0] = eval_control(sample.control, t - 0.5 * step)
            row[1] = step
            controls.append(row)
        refined.append(seq)
        picks.append(starts)
    boundaries = propagate_batch(model, x_target, refined, dt, backward=True)
    states = np.concatenate([boundaries[k, idx] for k, idx in enumerate(picks)])
    logger.info(f"Built {len(controls)} plant step pairs from {len(refined)} trajectories")
    return np.asarray(controls), states
