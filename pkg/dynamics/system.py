"""
System dynamics, piecewise-constant control functions and trajectory
integration.

A control function on [-T, 0] is stored as a ControlSequence: primitives u^j
held for durations tau^j, earliest segment first. Interior switch instants
belong to the later segment; t = 0 always evaluates to the last primitive.

Integration is fixed-step RK4. Every segment is covered by full ``dt`` steps
followed by one shorter step that lands exactly on the switch time, and the
batch sweep applies the same rule row by row, so single and batched runs share
one step grid.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from utils.errors import DomainError, IntegrationError
from utils.geometry import StateMetric

logger = logging.getLogger(__name__)

DEFAULT_DT = 0.01

# Slack used when deciding whether the remaining segment time fits in one step
_STEP_SLACK = 1e-12

VectorField = Callable[[np.ndarray, np.ndarray], np.ndarray]


def as_state(x, dimension: Optional[int] = None) -> np.ndarray:
    """
    Convert ``x`` to a finite float state vector.

    Args:
        x: Sequence of coordinates
        dimension: Expected length, if known

    Returns:
        1-D float array
    """
    state = np.asarray(x, dtype=float).reshape(-1)
    if dimension is not None and state.shape[0] != dimension:
        raise DomainError(f"state has dimension {state.shape[0]}, expected {dimension}")
    if not np.all(np.isfinite(state)):
        raise DomainError(f"state has non-finite coordinates: {state.tolist()}")
    return state


@dataclass(frozen=True)
class ControlSequence:
    """
    Piecewise-constant control function.

    Attributes:
        primitives: Control values u^1..u^K, earliest first
        durations: Non-negative durations tau^1..tau^K in seconds
    """
    primitives: Tuple[float, ...] = ()
    durations: Tuple[float, ...] = ()

    def __post_init__(self):
        primitives = tuple(float(u) for u in self.primitives)
        durations = tuple(float(d) for d in self.durations)
        if len(primitives) != len(durations):
            raise DomainError(
                f"{len(primitives)} primitives but {len(durations)} durations"
            )
        if any(not np.isfinite(u) for u in primitives):
            raise DomainError("primitives must be finite")
        if any(not np.isfinite(d) or d < 0.0 for d in durations):
            raise DomainError(f"durations must be finite and non-negative, got {durations}")
        object.__setattr__(self, "primitives", primitives)
        object.__setattr__(self, "durations", durations)

    def __len__(self) -> int:
        return len(self.primitives)

    @property
    def total_duration(self) -> float:
        return float(sum(self.durations))

    def boundaries(self) -> np.ndarray:
        """Switch instants -T, ..., 0 in the forward time frame (length K + 1)."""
        total = self.total_duration
        edges = -total + np.concatenate(([0.0], np.cumsum(self.durations)))
        edges[-1] = 0.0
        return edges

    def within_bounds(self, bounds: Tuple[float, float]) -> bool:
        low, high = bounds
        return all(low - 1e-12 <= u <= high + 1e-12 for u in self.primitives)

    def concat(self, later: "ControlSequence") -> "ControlSequence":
        """This sequence followed by ``later``."""
        return ControlSequence(self.primitives + later.primitives,
                               self.durations + later.durations)

    def split_at(self, times: Sequence[float]) -> Tuple["ControlSequence", np.ndarray]:
        """
        Insert extra switch instants without changing the control function.

        Args:
            times: Forward-frame instants in [-T, 0] (clipped into range)

        Returns:
            (refined sequence, index of each requested time among the refined
            sequence's boundaries)
        """
        requested = np.clip(np.asarray(times, dtype=float).reshape(-1), -self.total_duration, 0.0)
        edges = np.unique(np.concatenate((self.boundaries(), requested)))
        # merge instants closer than float noise
        keep = np.concatenate(([True], np.diff(edges) > 1e-12))
        edges = edges[keep]
        edges[-1] = 0.0
        positions = np.clip(np.searchsorted(edges, requested - 1e-12), 0, len(edges) - 1)
        if len(edges) < 2:
            return ControlSequence(), positions
        primitives, durations = [], []
        for start, end in zip(edges[:-1], edges[1:]):
            primitives.append(eval_control(self, 0.5 * (start + end)))
            durations.append(end - start)
        return ControlSequence(tuple(primitives), tuple(durations)), positions

    def tail(self, duration: float) -> "ControlSequence":
        """The suffix active on [-duration, 0]."""
        if duration <= 0.0 or len(self) == 0:
            return ControlSequence()
        refined, positions = self.split_at([-duration])
        first = int(positions[0])
        return ControlSequence(refined.primitives[first:], refined.durations[first:])

    def to_dict(self) -> Dict[str, List[float]]:
        return {"primitives": list(self.primitives), "durations": list(self.durations)}


@dataclass(frozen=True)
class SystemModel:
    """
    Control-affine or general system x' = f(x, u).

    Attributes:
        name: Model identifier
        dimension: State dimension n
        control_set: Admissible control primitives
        vector_field: Batched field, (B, n) states and (B,) controls to (B, n)
        control_bounds: Closed interval of admissible control values
        state_labels: Column names for persisted states
        angular_dims: Coordinates compared modulo 2*pi
        position_dims: Coordinates that make up the position
        metric_weights: Per-coordinate weights of the state metric
        parameters: Model constants (speed, max turn rate, ...)
    """
    name: str
    dimension: int
    control_set: Tuple[float, ...]
    vector_field: VectorField
    control_bounds: Tuple[float, float]
    state_labels: Tuple[str, ...]
    angular_dims: Tuple[int, ...] = ()
    position_dims: Tuple[int, ...] = ()
    metric_weights: Tuple[float, ...] = ()
    parameters: Dict[str, float] = field(default_factory=dict)

    @property
    def metric(self) -> StateMetric:
        weights = self.metric_weights or (1.0,) * self.dimension
        return StateMetric(tuple(weights), tuple(self.angular_dims))

    def f(self, x, u) -> np.ndarray:
        """Evaluate the vector field for one state and control."""
        out = self.vector_field(np.atleast_2d(np.asarray(x, dtype=float)),
                                np.atleast_1d(np.asarray(u, dtype=float)))
        return out[0]


@dataclass
class Trajectory:
    """
    Sampled trajectory.

    Forward trajectories carry times in [-T, 0]. Backward trajectories carry
    elapsed backward time in [0, T], with states[0] the target.
    """
    times: np.ndarray
    states: np.ndarray

    @property
    def start(self) -> np.ndarray:
        return self.states[0]

    @property
    def end(self) -> np.ndarray:
        return self.states[-1]

    def __len__(self) -> int:
        return len(self.times)

    def to_frame(self, labels: Sequence[str]) -> pd.DataFrame:
        frame = pd.DataFrame(self.states, columns=list(labels))
        frame.insert(0, "t", self.times)
        return frame


def unit_cost(u: float) -> float:
    return 1.0


def effort_cost(u: float) -> float:
    return 1.0 + u * u


COST_FUNCTIONS: Dict[str, Callable[[float], float]] = {
    "time": unit_cost,
    "effort": effort_cost,
}


def eval_control(seq: ControlSequence, t: float) -> float:
    """
    Evaluate the control function at forward time ``t``.

    Args:
        seq: Control sequence defined on [-T, 0]
        t: Query instant

    Returns:
        The primitive active at ``t``
    """
    if len(seq) == 0:
        raise DomainError("empty control sequence has an empty domain")
    total = seq.total_duration
    if t > 1e-12 or t < -total - 1e-12 * max(1.0, total):
        raise DomainError(f"t={t} outside [{-total}, 0]")
    if t >= 0.0:
        return seq.primitives[-1]
    start = -total
    for u, tau in zip(seq.primitives, seq.durations):
        end = start + tau
        if tau > 0.0 and t < end:
            return u
        start = end
    return seq.primitives[-1]


def sequence_cost(seq: ControlSequence, cost_fn: Callable[[float], float] = unit_cost) -> float:
    """Integral of C(u(t)) over the sequence; equals the total duration for C = 1."""
    return float(sum(cost_fn(u) * tau for u, tau in zip(seq.primitives, seq.durations)))


def stack_sequences(sequences: Sequence[ControlSequence]) -> Tuple[np.ndarray, np.ndarray]:
    """
    Pack sequences into zero-padded (B, K_max) primitive and duration arrays.

    Padding segments have zero duration and are appended after the last real
    segment, so they change neither the forward nor the backward trajectory.
    """
    width = max((len(s) for s in sequences), default=0)
    primitives = np.zeros((len(sequences), width))
    durations = np.zeros((len(sequences), width))
    for row, seq in enumerate(sequences):
        primitives[row, :len(seq)] = seq.primitives
        durations[row, :len(seq)] = seq.durations
    return primitives, durations


def _rk4_step(vector_field: VectorField, x: np.ndarray, u: np.ndarray, h: np.ndarray) -> np.ndarray:
    h = h[:, None]
    k1 = vector_field(x, u)
    k2 = vector_field(x + 0.5 * h * k1, u)
    k3 = vector_field(x + 0.5 * h * k2, u)
    k4 = vector_field(x + h * k3, u)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _sweep(vector_field: VectorField, x0: np.ndarray, primitives: np.ndarray,
           durations: np.ndarray, dt: float, record: bool = False):
    """
    Integrate a batch of piecewise-constant controls with RK4.

    Args:
        vector_field: Batched field
        x0: Initial states (B, n)
        primitives: Controls in traversal order (B, K)
        durations: Durations in traversal order (B, K)
        dt: Nominal step
        record: Also return every step (requires B == 1)

    Returns:
        (boundary states (B, K + 1, n), elapsed times, recorded states)
    """
    if dt <= 0.0:
        raise DomainError(f"dt must be positive, got {dt}")
    batch, segments = primitives.shape
    x = np.array(x0, dtype=float, copy=True)
    rows = np.arange(batch)
    boundaries = np.empty((batch, segments + 1, x.shape[1]))
    boundaries[:, 0] = x
    seg = np.zeros(batch, dtype=int)
    remaining = durations[:, 0].copy() if segments else np.zeros(batch)
    elapsed = np.zeros(batch)
    times, states = ([0.0], [x[0].copy()]) if record else (None, None)

    def close_finished():
        nonlocal remaining
        finished = (seg < segments) & (remaining <= 0.0)
        while np.any(finished):
            seg[finished] += 1
            boundaries[rows[finished], seg[finished]] = x[finished]
            open_rows = finished & (seg < segments)
            remaining[open_rows] = durations[rows[open_rows], seg[open_rows]]
            finished = (seg < segments) & (remaining <= 0.0)

    close_finished()
    while np.any(seg < segments):
        active = seg < segments
        last = remaining - dt <= _STEP_SLACK
        h = np.where(last, remaining, dt)
        h[~active] = 0.0
        u = primitives[rows, np.minimum(seg, segments - 1)]
        x = _rk4_step(vector_field, x, u, h)
        if not np.all(np.isfinite(x)):
            raise IntegrationError("non-finite state encountered during integration")
        remaining = np.where(last, 0.0, remaining - h)
        elapsed += h
        if record:
            times.append(float(elapsed[0]))
            states.append(x[0].copy())
        close_finished()

    recorded = (np.asarray(times), np.asarray(states)) if record else None
    return boundaries, elapsed, recorded


def propagate_batch(model: SystemModel, starts, sequences: Sequence[ControlSequence],
                    dt: float = DEFAULT_DT, backward: bool = False) -> np.ndarray:
    """
    Integrate many sequences at once and return the state at every switch.

    Args:
        model: System model
        starts: Initial states, shape (B, n) or (n,) shared by all rows
        sequences: One control sequence per row
        dt: Nominal RK4 step
        backward: Integrate x' = -f(x, u) from ``starts`` through the
            segments in reverse order

    Returns:
        Array (B, K_max + 1, n) of boundary states in forward-time order:
        index 0 is the state at -T, index K_max the state at 0
    """
    starts = np.asarray(starts, dtype=float)
    if starts.ndim == 1:
        starts = np.repeat(starts[None, :], len(sequences), axis=0)
    primitives, durations = stack_sequences(sequences)
    if backward:
        field_fn = lambda x, u: -model.vector_field(x, u)
        boundaries, _, _ = _sweep(field_fn, starts, primitives[:, ::-1], durations[:, ::-1], dt)
        return boundaries[:, ::-1]
    boundaries, _, _ = _sweep(model.vector_field, starts, primitives, durations, dt)
    return boundaries


def integrate_forward(model: SystemModel, x0, seq: ControlSequence,
                      dt: float = DEFAULT_DT) -> Trajectory:
    """
    Integrate x' = f(x, u(t)) over [-T, 0] from x(-T) = x0.

    Args:
        model: System model
        x0: Initial state
        seq: Control sequence
        dt: Nominal RK4 step

    Returns:
        Trajectory with forward times in [-T, 0], both endpoints included
    """
    x0 = as_state(x0, model.dimension)
    primitives, durations = stack_sequences([seq])
    _, _, (elapsed, states) = _sweep(model.vector_field, x0[None, :], primitives, durations,
                                     dt, record=True)
    times = elapsed - seq.total_duration
    times[-1] = 0.0
    return Trajectory(times=times, states=states)


def integrate_backward(model: SystemModel, x_target, seq: ControlSequence,
                       dt: float = DEFAULT_DT) -> Trajectory:
    """
    Integrate the backward system x' = -f(x, u) from the target.

    Segments are traversed last to first, so replaying ``seq`` forward from
    the returned end state reproduces the target.

    Args:
        model: System model
        x_target: Target state (initial condition of the backward system)
        seq: Control sequence
        dt: Nominal RK4 step

    Returns:
        Trajectory with elapsed backward time in [0, T]; states[0] is the target
    """
    x_target = as_state(x_target, model.dimension)
    primitives, durations = stack_sequences([seq])
    field_fn = lambda x, u: -model.vector_field(x, u)
    _, _, (elapsed, states) = _sweep(field_fn, x_target[None, :], primitives[:, ::-1],
                                     durations[:, ::-1], dt, record=True)
    if len(elapsed) > 1:
        elapsed[-1] = seq.total_duration
    return Trajectory(times=elapsed, states=states)
