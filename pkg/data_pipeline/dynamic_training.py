"""
Dynamic training loop.

Each iteration queries the network on the fixed query set, simulates the
proposed controls backward from the target, filters the new endpoints and the
existing training set, and retrains on what survives. Accept regions and decay
rates follow a three-phase schedule.
"""
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import joblib
import numpy as np

from data_pipeline.filters import FilterParams, exp_filter_mask, length_filter
from data_pipeline.regions import AcceptRegion, Cone, PointSet, Sphere, WholeSpace, contains, min_cone, project
from data_pipeline.samples import Sample, certify_samples
from data_pipeline.warmup import gen_query_set, gen_warmup, inject_suboptimal, plant_step_pairs
from dynamics.system import DEFAULT_DT, ControlSequence, SystemModel, propagate_batch, unit_cost
from ml_layer.config import NetConfig
from ml_layer.models.inverse_dynamics import (
    RnnWeights,
    TrainExample,
    dataset_mse,
    forward_batch,
    init_weights,
    train_full,
    train_plant,
)
from utils.errors import TrainingLoopError
from utils.helpers import format_seconds, split_streams
from utils.io import write_iteration_log

logger = logging.getLogger(__name__)

EXPLORE, GUIDE, EXPLOIT = "explore", "guide", "exploit"


@dataclass(frozen=True)
class FilterSchedule:
    """
    Decay-rate schedule over iterations.

    explore (k < explore_until): both filters use the cone at
        explore_factor * lambda_cone
    guide (k < guide_until): old samples use the cone at lambda_cone, new
        ones the sphere at lambda_sphere * ramp^floor((k - a) / ramp_every)
    exploit: both use the sphere at exploit_factor * lambda_sphere
    """
    explore_until: int = 30
    guide_until: int = 80
    lambda_cone: float = 0.5
    lambda_sphere: float = 0.2
    explore_factor: float = 0.5
    ramp: float = 1.5
    ramp_every: int = 10
    exploit_factor: float = 5.0

    def phase(self, iteration: int) -> str:
        if iteration < self.explore_until:
            return EXPLORE
        if iteration < self.guide_until:
            return GUIDE
        return EXPLOIT

    def regions(self, iteration: int, cone: AcceptRegion,
                sphere: AcceptRegion) -> Tuple[AcceptRegion, float, AcceptRegion, float]:
        """(old region, old lambda, new region, new lambda) for ``iteration``."""
        phase = self.phase(iteration)
        if phase == EXPLORE:
            lam = self.explore_factor * self.lambda_cone
            return cone, lam, cone, lam
        if phase == GUIDE:
            steps = (iteration - self.explore_until) // self.ramp_every
            return cone, self.lambda_cone, sphere, self.lambda_sphere * self.ramp ** steps
        lam = self.exploit_factor * self.lambda_sphere
        return sphere, lam, sphere, lam


@dataclass(frozen=True)
class DynamicParams:
    """
    Everything one dynamic_step needs besides the training state.

    Attributes:
        old_region: Accept region for the existing training set
        new_region: Accept region for freshly simulated samples
        old_filter: Exponential and length filter settings for the training set
        new_filter: Filter settings for new samples; only ``lam`` is used
        epochs: Retraining epochs
        length_filter_enabled: False skips the length filter
        phase: Schedule phase name, copied to the iteration log
    """
    old_region: AcceptRegion
    new_region: AcceptRegion
    old_filter: FilterParams
    new_filter: FilterParams
    epochs: int = 40
    length_filter_enabled: bool = True
    phase: str = ""


@dataclass
class TrainingSettings:
    epsilon: float = 1.0
    query_count: int = 500
    segments: int = 3
    d1_samples: int = 400
    d1_max_duration: float = 100.0
    d1_lambda: float = 0.05
    pair_times: int = 50
    d2_samples: int = 300
    d2_max_duration: float = 2.0 * math.pi
    suboptimal_fraction: float = 0.0
    cone_margin: float = 0.1
    lambda_cost: float = 1.0
    neighbourhood: float = 0.5
    length_filter_enabled: bool = True
    plant_epochs: int = 200
    warmup_epochs: int = 300
    retrain_epochs: int = 40
    max_iterations: int = 200
    stop_fraction: float = 0.5
    stop_streak: int = 3
    dt: float = DEFAULT_DT

    def filter_params(self, lam: float) -> FilterParams:
        return FilterParams(lam, self.lambda_cost, self.neighbourhood)


@dataclass
class TrainState:
    """
    Mutable state of one training run; pickled whole for snapshots.

    Attributes:
        weights: Current network weights
        train_set: Feasible samples (T, U)
        query_set: Fixed query states around the desired state
        iteration: Completed dynamic iterations
        rng: The run's random stream
        hit_streak: Consecutive iterations meeting the stop fraction
        log: One record per completed iteration
        plant_history: Plant-layer loss history from the warm-up
    """
    weights: RnnWeights
    train_set: List[Sample]
    query_set: np.ndarray
    iteration: int
    rng: np.random.Generator
    hit_streak: int = 0
    log: List[Dict[str, float]] = field(default_factory=list)
    plant_history: List[float] = field(default_factory=list)


def to_examples(samples: List[Sample]) -> List[TrainExample]:
    return [TrainExample(s.state, s.control) for s in samples]


def _fits_horizon(samples: List[Sample], cfg: NetConfig) -> List[Sample]:
    return [s for s in samples if s.control.total_duration <= cfg.max_duration + 1e-9]


def warm_start(model: SystemModel, cfg: NetConfig, x_bar, x_target, settings: TrainingSettings,
               rng: np.random.Generator, d1: Optional[List[Sample]] = None,
               d2: Optional[List[Sample]] = None, cost_fn: Callable[[float], float] = unit_cost,
               schedule: FilterSchedule = FilterSchedule()) -> TrainState:
    """
    Build the query set, fit the plant layer on D1 and pre-train on D2.

    The query set, D1 and D2 come from the data child of ``rng`` (D1 and D2
    only when not supplied); the network and the loop use the training child.
    """
    started = time.perf_counter()
    data_rng, rng = split_streams(rng)
    query_set = gen_query_set(x_bar, settings.epsilon, settings.query_count, data_rng, model.metric)
    cone = min_cone(x_target, query_set, settings.cone_margin, model.position_dims)
    codebook = cfg.primitive_codebook
    if d1 is None:
        d1 = gen_warmup(model, WholeSpace(), settings.d1_lambda, settings.d1_samples,
                        settings.d1_max_duration, codebook, data_rng, x_target, settings.segments,
                        settings.dt, cost_fn)
    if d2 is None:
        d2 = gen_warmup(model, cone, schedule.lambda_cone, settings.d2_samples,
                        settings.d2_max_duration, codebook, data_rng, x_target, settings.segments,
                        settings.dt, cost_fn)
        d2 = inject_suboptimal(model, d2, settings.suboptimal_fraction, data_rng, x_target,
                               settings.dt, cost_fn)

    weights = init_weights(cfg, rng)
    controls, next_states = plant_step_pairs(model, d1, settings.pair_times, cfg.width_u,
                                             rng, x_target, settings.dt)
    weights, plant_history = train_plant(weights, cfg, controls, next_states, settings.plant_epochs)
    usable = _fits_horizon(d2, cfg)
    if usable:
        weights, loss = train_full(weights, cfg, to_examples(usable), settings.warmup_epochs)
        logger.info(f"Warm-up training on {len(usable)} samples: objective {loss:.4g}, "
                    f"MSE {dataset_mse(weights, cfg, to_examples(usable)):.4g}")
    else:
        logger.warning("No D2 sample fits the network horizon; skipping warm-up training")
    logger.info(f"Warm start finished in {format_seconds(time.perf_counter() - started)}")
    return TrainState(weights=weights, train_set=list(d2), query_set=query_set, iteration=0,
                      rng=rng, plant_history=plant_history)


def dynamic_step(ts: TrainState, model: SystemModel, cfg: NetConfig, params: DynamicParams,
                 x_bar, x_target, epsilon: float = 1.0, dt: float = DEFAULT_DT,
                 cost_fn: Callable[[float], float] = unit_cost, stop_fraction: float = 0.5) -> TrainState:
    """
    One query / simulate / filter / retrain iteration.

    Args:
        ts: Current training state (updated in place and returned)
        model: System model
        cfg: Network configuration
        params: Regions, decay rates and retraining epochs for this iteration
        x_bar: Desired state
        x_target: Target state
        epsilon: Query-ball radius, used for the hit fraction
        dt: Integration step
        cost_fn: Running cost
        stop_fraction: Hit fraction that extends the stop streak

    Returns:
        The updated state
    """
    iteration = ts.iteration
    rng = ts.rng

    # query
    primitives, durations = forward_batch(ts.weights, cfg, ts.query_set)
    proposals = [ControlSequence(tuple(p), tuple(d)) for p, d in zip(primitives, durations)]

    # simulate
    endpoints = propagate_batch(model, x_target, proposals, dt, backward=True)[:, 0]
    simulated = certify_samples(model, endpoints, proposals, x_target, dt, cost_fn, strict=False)

    # filter new
    keep_new = exp_filter_mask(np.stack([s.state for s in simulated]) if simulated else np.zeros((0, model.dimension)),
                               params.new_region, params.new_filter.lam, rng)
    new = [s for s, kept in zip(simulated, keep_new) if kept]
    if not new:
        logger.warning(f"Iteration {iteration}: no new sample accepted; retraining on old data")

    # filter old
    old_states = np.stack([s.state for s in ts.train_set]) if ts.train_set else np.zeros((0, model.dimension))
    keep_old = exp_filter_mask(old_states, params.old_region, params.old_filter.lam, rng)
    old = [s for s, kept in zip(ts.train_set, keep_old) if kept]
    if params.length_filter_enabled:
        old = length_filter(old, params.old_filter.lambda_cost, params.old_filter.neighbourhood, rng,
                            model.metric)

    # compile
    train_set = old + new
    if not train_set:
        raise TrainingLoopError("training set is empty after filtering; the schedule is too aggressive",
                                iteration=iteration)

    # retrain
    usable = _fits_horizon(train_set, cfg)
    loss = float("nan")
    if usable:
        ts.weights, loss = train_full(ts.weights, cfg, to_examples(usable), params.epochs)
    else:
        logger.warning(f"Iteration {iteration}: no sample fits the network horizon; weights kept")

    hit_fraction = _hit_fraction(endpoints, ts.query_set, epsilon, model)
    ts.hit_streak = ts.hit_streak + 1 if hit_fraction >= stop_fraction else 0
    ts.train_set = train_set
    ts.iteration = iteration + 1
    states = np.stack([s.state for s in train_set])
    record = {
        "iter": iteration,
        "phase": params.phase,
        "train_set_size": len(train_set),
        "new_accepted": len(new),
        "mean_dist_to_xbar": float(np.mean(model.metric.distance(states, np.asarray(x_bar, dtype=float)))),
        "hit_fraction": hit_fraction,
        "mean_gap_to_new_region": _mean_gap(simulated, params.new_region, model),
        "loss": loss,
    }
    ts.log.append(record)
    logger.info(f"Iteration {iteration} [{params.phase}]: {len(train_set)} samples "
                f"({len(new)} new), mean distance {record['mean_dist_to_xbar']:.3f}, "
                f"hits {hit_fraction:.2f}, loss {loss:.4g}")
    return ts


def _hit_fraction(endpoints: np.ndarray, query_set: np.ndarray, epsilon: float,
                  model: SystemModel) -> float:
    """Fraction of simulated endpoints within epsilon of some query state."""
    if len(endpoints) == 0:
        return 0.0
    near_query = PointSet(query_set, epsilon, model.metric)
    return sum(1 for e in endpoints if contains(e, near_query)) / len(endpoints)


def _mean_gap(samples: List[Sample], region: AcceptRegion, model: SystemModel) -> float:
    """Mean distance from simulated samples to their projection on the accept region."""
    if not samples:
        return float("nan")
    return float(np.mean([model.metric.distance(s.state, project(s.state, region)) for s in samples]))


def save_snapshot(ts: TrainState, path: str):
    joblib.dump(ts, path)
    logger.debug(f"Snapshot of iteration {ts.iteration} written to {path}")


def load_snapshot(path: str) -> TrainState:
    ts = joblib.load(path)
    logger.info(f"Resuming from snapshot {path} at iteration {ts.iteration}")
    return ts


def run_training(model: SystemModel, cfg: NetConfig, x_bar, x_target, schedule: FilterSchedule,
                 rng: np.random.Generator, settings: TrainingSettings = None,
                 resume: Optional[TrainState] = None, snapshot_path: Optional[str] = None,
                 log_path: Optional[str] = None, cost_fn: Callable[[float], float] = unit_cost,
                 d1: Optional[List[Sample]] = None,
                 d2: Optional[List[Sample]] = None) -> Tuple[RnnWeights, List[Sample]]:
    """
    Warm up, then iterate dynamic_step until the stop criterion or max_iterations.

    Args:
        model: System model
        cfg: Network configuration
        x_bar: Desired state
        x_target: Target state
        schedule: Filter schedule
        rng: Random stream (ignored when resuming; the snapshot carries its own)
        settings: Loop settings
        resume: Snapshot state to continue from
        snapshot_path: Where to write a snapshot after every iteration
        log_path: Where to write the JSON-lines iteration log
        cost_fn: Running cost
        d1, d2: Pre-generated warm-up datasets

    Returns:
        (final weights, final training set)
    """
    settings = settings or TrainingSettings()
    started = time.perf_counter()
    if resume is None:
        ts = warm_start(model, cfg, x_bar, x_target, settings, rng, d1, d2, cost_fn, schedule)
        if snapshot_path:
            save_snapshot(ts, snapshot_path)
    else:
        ts = resume
    cone: Cone = min_cone(x_target, ts.query_set, settings.cone_margin, model.position_dims)
    sphere = Sphere(tuple(np.asarray(x_bar, dtype=float)), settings.epsilon, model.metric)

    while ts.iteration < settings.max_iterations and ts.hit_streak < settings.stop_streak:
        old_region, old_lambda, new_region, new_lambda = schedule.regions(ts.iteration, cone, sphere)
        params = DynamicParams(old_region, new_region, settings.filter_params(old_lambda),
                               settings.filter_params(new_lambda), settings.retrain_epochs,
                               settings.length_filter_enabled, schedule.phase(ts.iteration))
        try:
            ts = dynamic_step(ts, model, cfg, params, x_bar, x_target, settings.epsilon,
                              settings.dt, cost_fn, settings.stop_fraction)
        except TrainingLoopError:
            raise
        except Exception as e:
            logger.error(f"Iteration {ts.iteration} failed: {str(e)}")
            raise TrainingLoopError(str(e), iteration=ts.iteration) from e
        if log_path:
            write_iteration_log(log_path, ts.log)
        if snapshot_path:
            save_snapshot(ts, snapshot_path)

    reason = "stop criterion" if ts.hit_streak >= settings.stop_streak else "iteration limit"
    logger.info(f"Training finished after {ts.iteration} iterations ({reason}) in "
                f"{format_seconds(time.perf_counter() - started)}; {len(ts.train_set)} samples")
    return ts.weights, ts.train_set
