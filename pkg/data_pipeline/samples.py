"""
Feasible samples: a state, a control sequence that drives it to the target,
and the cost of that control.

A Sample can only be built with a passing feasibility certificate, so every
value derived from the training set is realized by an actual trajectory.
"""
import logging
from dataclasses import dataclass
from typing import Callable, List, Sequence

import numpy as np

from dynamics.system import (
    DEFAULT_DT,
    ControlSequence,
    SystemModel,
    propagate_batch,
    sequence_cost,
    unit_cost,
)
from utils.errors import FeasibilityError

logger = logging.getLogger(__name__)

FEASIBILITY_TOL = 1e-3


@dataclass(frozen=True, eq=False)
class Sample:
    """
    Attributes:
        state: Start state (endpoint of a backward trajectory from the target)
        control: Control sequence driving ``state`` to the target
        cost: Running cost of ``control``
        certificate_error: Distance between the forward replay's end and the target
    """
    state: np.ndarray
    control: ControlSequence
    cost: float
    certificate_error: float

    def __post_init__(self):
        object.__setattr__(self, "state", np.asarray(self.state, dtype=float))
        if not (np.isfinite(self.certificate_error) and self.certificate_error <= FEASIBILITY_TOL):
            raise FeasibilityError(f"replay misses the target by {self.certificate_error:.3g}")
        if self.cost < 0.0:
            raise FeasibilityError(f"negative cost {self.cost}")


def replay_errors(model: SystemModel, states, sequences: Sequence[ControlSequence], x_target,
                  dt: float = DEFAULT_DT) -> np.ndarray:
    """Distance from the target after replaying each sequence forward from its state."""
    if not len(sequences):
        return np.zeros(0)
    ends = propagate_batch(model, np.atleast_2d(states), sequences, dt)[:, -1]
    return model.metric.distance(ends, np.asarray(x_target, dtype=float))


def certify_samples(model: SystemModel, states, sequences: Sequence[ControlSequence], x_target,
                    dt: float = DEFAULT_DT, cost_fn: Callable[[float], float] = unit_cost,
                    strict: bool = True) -> List[Sample]:
    """
    Build Samples after checking each forward replay.

    Args:
        model: System model
        states: Candidate start states (B, n)
        sequences: One control sequence per state
        x_target: Target state
        dt: Integration step of the replay
        cost_fn: Running cost C(u)
        strict: Raise on the first failing certificate instead of dropping it

    Returns:
        Samples in input order (failures dropped when not strict)
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    errors = replay_errors(model, states, sequences, x_target, dt)
    samples = []
    for state, seq, error in zip(states, sequences, errors):
        try:
            if not seq.within_bounds(model.control_bounds):
                raise FeasibilityError(f"control {seq.primitives} leaves {model.control_bounds}")
            samples.append(Sample(state, seq, sequence_cost(seq, cost_fn), float(error)))
        except FeasibilityError:
            if strict:
                raise
    dropped = len(sequences) - len(samples)
    if dropped:
        logger.warning(f"Dropped {dropped} samples with failing feasibility certificates")
    return samples
