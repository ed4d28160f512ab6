"""
Closed-loop controller built on the corridor's value gradient.

Every ``control_dt`` the controller picks the primitive minimizing
grad V . f(x, u) and holds it while the plant is integrated forward.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from dynamics.system import DEFAULT_DT, ControlSequence, SystemModel, Trajectory, integrate_forward
from services.corridor import Corridor, gradient
from utils.errors import ConfigurationError, GradientUnavailableError

logger = logging.getLogger(__name__)

SUCCESS = "SUCCESS"
FAIL_TIMEOUT = "FAIL_TIMEOUT"
FAIL_LOST = "FAIL_LOST"


@dataclass(frozen=True)
class SynthesisConfig:
    """
    Attributes:
        control_dt: Replanning interval in seconds
        reach_tol: Position distance to the target counted as arrival
        max_time: Rollout time limit in seconds
        cylinder_r: Initial hyper-cylinder radius of the gradient search
        dt: Integration step
        tie_tol: Scores within this of the minimum count as ties
    """
    control_dt: float = 0.1
    reach_tol: float = 0.5
    max_time: float = 60.0
    cylinder_r: float = 0.5
    dt: float = DEFAULT_DT
    tie_tol: float = 1e-12

    def validate(self) -> "SynthesisConfig":
        for name in ("control_dt", "reach_tol", "max_time", "cylinder_r", "dt"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and value > 0.0):
                raise ConfigurationError(f"must be positive, got {value!r}", field=f"synthesis.{name}")
        if self.tie_tol < 0.0:
            raise ConfigurationError(f"must be non-negative, got {self.tie_tol}", field="synthesis.tie_tol")
        if self.dt > self.control_dt:
            raise ConfigurationError("integration step exceeds the control interval", field="synthesis.dt")
        return self


@dataclass
class RolloutResult:
    trajectory: Trajectory
    outcome: str
    elapsed: float
    controls: List[Tuple[float, float]] = field(default_factory=list)

    @property
    def succeeded(self) -> bool:
        return self.outcome == SUCCESS


def select_control(c: Corridor, model: SystemModel, x, cfg: SynthesisConfig) -> float:
    """
    Primitive minimizing the directional derivative of the value.

    Ties go to the smallest |u|, then the smallest u.

    Raises:
        GradientUnavailableError: The corridor has no data around ``x``
    """
    x = np.asarray(x, dtype=float)
    grad = gradient(c, x, cfg.cylinder_r)
    controls = np.asarray(model.control_set, dtype=float)
    scores = model.vector_field(np.repeat(x[None, :], len(controls), axis=0), controls) @ grad
    best = scores.min()
    tied = controls[scores <= best + cfg.tie_tol * max(1.0, abs(best))]
    return float(min(tied, key=lambda u: (abs(u), u)))


def _position_gap(model: SystemModel, states: np.ndarray, target: np.ndarray) -> np.ndarray:
    dims = list(model.position_dims) or list(range(model.dimension))
    return np.linalg.norm(np.atleast_2d(states)[:, dims] - target[dims], axis=1)


def rollout(c: Corridor, model: SystemModel, x_bar, cfg: SynthesisConfig) -> RolloutResult:
    """
    Drive the plant from ``x_bar`` toward the corridor's target.

    Arrival is checked at every integration sample, so the trajectory ends at
    the first state within ``reach_tol`` of the target position.

    Returns:
        RolloutResult with outcome SUCCESS, FAIL_TIMEOUT or FAIL_LOST
    """
    target = c.target
    x = np.asarray(x_bar, dtype=float)
    times, states, controls = [0.0], [x], []
    elapsed = 0.0
    if _position_gap(model, x, target)[0] <= cfg.reach_tol:
        return RolloutResult(Trajectory(np.array(times), np.array(states)), SUCCESS, 0.0)

    outcome = FAIL_TIMEOUT
    while elapsed < cfg.max_time - 1e-12:
        try:
            u = select_control(c, model, x, cfg)
        except GradientUnavailableError as e:
            logger.debug(f"Lost corridor after {elapsed:.2f} s: {e}")
            outcome = FAIL_LOST
            break
        hold = min(cfg.control_dt, cfg.max_time - elapsed)
        controls.append((elapsed, u))
        segment = integrate_forward(model, x, ControlSequence((u,), (hold,)), cfg.dt)
        seg_times = elapsed + hold + segment.times[1:]
        seg_states = segment.states[1:]
        arrived = np.flatnonzero(_position_gap(model, seg_states, target) <= cfg.reach_tol)
        if len(arrived):
            stop = arrived[0] + 1
            times.extend(seg_times[:stop])
            states.extend(seg_states[:stop])
            elapsed = float(seg_times[stop - 1])
            outcome = SUCCESS
            break
        times.extend(seg_times)
        states.extend(seg_states)
        elapsed += hold
        x = segment.end

    logger.debug(f"Rollout from {np.asarray(x_bar).tolist()}: {outcome} after {elapsed:.3f} s")
    return RolloutResult(Trajectory(np.asarray(times), np.asarray(states)), outcome, elapsed, controls)


def rollout_many(c: Corridor, model: SystemModel, starts: Sequence, cfg: SynthesisConfig,
                 n_jobs: int = 1) -> List[RolloutResult]:
    """Independent rollouts in input order; threads share the read-only corridor."""
    results = Parallel(n_jobs=n_jobs, backend="threading")(
        delayed(rollout)(c, model, start, cfg) for start in starts)
    succeeded = sum(r.succeeded for r in results)
    logger.info(f"{succeeded} of {len(results)} rollouts reached the target")
    return list(results)
