"""
Corridor service: the point cloud of approximate values traced along feasible
trajectories, with neighbour queries and hyper-cylinder value gradients.
"""
import logging
import math
import os
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from dynamics.system import (
    DEFAULT_DT,
    ControlSequence,
    SystemModel,
    propagate_batch,
    sequence_cost,
    unit_cost,
)
from utils.errors import ArgumentError, CorridorStateError, GradientUnavailableError
from utils.geometry import StateMetric
from utils.helpers import read_json, write_json
from utils.spatial import PeriodicIndex

logger = logging.getLogger(__name__)

DEFAULT_SPACING = 0.1
MAX_RADIUS_DOUBLINGS = 3
EXACT_MATCH = 1e-12


@dataclass(frozen=True)
class CorridorPoint:
    """
    Attributes:
        state: State on a feasible trajectory
        time: Forward time t <= 0 at which the trajectory passes ``state``
        value: Cost of the remaining trajectory from ``state`` to the target
        source_sample: Index of the generating sample
        tail_control: Control active on [time, 0]; None for corridors read from disk
    """
    state: np.ndarray
    time: float
    value: float
    source_sample: int
    tail_control: Optional[ControlSequence] = None


class Corridor:
    """Immutable point cloud with an exact neighbour index and per-dimension cylinder indexes."""

    def __init__(self, states, times, values, sources, metric: StateMetric, target,
                 tail_controls: Optional[List[ControlSequence]] = None,
                 build_info: Optional[Dict] = None):
        self.states = np.atleast_2d(np.asarray(states, dtype=float))
        self.times = np.asarray(times, dtype=float).reshape(-1)
        self.values = np.asarray(values, dtype=float).reshape(-1)
        self.sources = np.asarray(sources, dtype=int).reshape(-1)
        if not (len(self.states) == len(self.times) == len(self.values) == len(self.sources)):
            raise ArgumentError("corridor columns have different lengths")
        self.metric = metric
        self.target = np.asarray(target, dtype=float)
        self.tail_controls = tail_controls
        self.build_info = dict(build_info or {})
        self.index = PeriodicIndex(self.states, metric)
        n = metric.dimension
        self._cylinders = [PeriodicIndex(self.states, metric, dims=[d for d in range(n) if d != i])
                           for i in range(n)]

    def __len__(self) -> int:
        return len(self.values)

    def point(self, i: int) -> CorridorPoint:
        tail = self.tail_controls[i] if self.tail_controls is not None else None
        return CorridorPoint(self.states[i], float(self.times[i]), float(self.values[i]),
                             int(self.sources[i]), tail)

    @property
    def points(self) -> List[CorridorPoint]:
        return [self.point(i) for i in range(len(self))]

    def subset(self, mask) -> "Corridor":
        """Corridor restricted to the points selected by ``mask``."""
        mask = np.asarray(mask)
        tails = None
        if self.tail_controls is not None:
            keep = np.flatnonzero(mask) if mask.dtype == bool else mask
            tails = [self.tail_controls[i] for i in keep]
        return Corridor(self.states[mask], self.times[mask], self.values[mask], self.sources[mask],
                        self.metric, self.target, tails, self.build_info)

    def cylinder_hits(self, dimension: int, x, radius: float) -> np.ndarray:
        return self._cylinders[dimension].query_radius(x, radius)

    def to_frame(self, labels: Sequence[str]) -> pd.DataFrame:
        frame = pd.DataFrame(self.states, columns=list(labels))
        frame["t"] = self.times
        frame["value"] = self.values
        frame["sample_idx"] = self.sources
        return frame


def build_corridor(samples, model: SystemModel, spacing: float = DEFAULT_SPACING,
                   dt: float = DEFAULT_DT, x_target=None,
                   cost_fn: Callable[[float], float] = unit_cost) -> Corridor:
    """
    Trace every sample's trajectory and attach values to evenly spaced points.

    Sample i with duration T gets M = max(2, ceil(T / spacing) + 1) points at
    t_j = -j T / (M - 1). Under unit cost the value is -t_j exactly; otherwise
    it is the running cost of the control tail on [t_j, 0].

    Args:
        samples: Feasible samples (``state``, ``control``)
        model: System model
        spacing: Target time between consecutive points in seconds
        dt: Integration step
        x_target: Target state; the origin when None
        cost_fn: Running cost

    Returns:
        Corridor with sum(M_i) points
    """
    if not samples:
        raise ArgumentError("cannot build a corridor from an empty sample set")
    if not spacing > 0.0:
        raise ArgumentError(f"spacing must be positive, got {spacing}")
    x_target = np.zeros(model.dimension) if x_target is None else np.asarray(x_target, dtype=float)

    grids, refined, positions = [], [], []
    for sample in samples:
        total = sample.control.total_duration
        count = max(2, math.ceil(total / spacing - 1e-9) + 1)
        times = -np.arange(count) * total / (count - 1)
        seq, pos = sample.control.split_at(times)
        grids.append(times)
        refined.append(seq)
        positions.append(pos)
    boundaries = propagate_batch(model, x_target, refined, dt, backward=True)

    states, times, values, sources, tails = [], [], [], [], []
    for i, sample in enumerate(samples):
        traced = boundaries[i, positions[i]]
        traced[0] = x_target
        if sample.control.total_duration > 0.0:
            traced[-1] = sample.state
        for t, state in zip(grids[i], traced):
            tail = sample.control.tail(-t)
            states.append(state)
            times.append(t)
            values.append(-t if cost_fn is unit_cost else sequence_cost(tail, cost_fn))
            sources.append(i)
            tails.append(tail)

    info = {"spacing": float(spacing), "dt": float(dt), "samples": len(samples)}
    corridor = Corridor(np.asarray(states), times, values, sources, model.metric, x_target, tails, info)
    logger.info(f"Built corridor with {len(corridor)} points from {len(samples)} samples "
                f"(spacing {spacing:g} s)")
    return corridor


def _one_side(diff: np.ndarray, dist: np.ndarray, values: np.ndarray, side: np.ndarray):
    """Closest and second closest points on one side with distinct coordinates."""
    order = np.flatnonzero(side)[np.argsort(dist[side], kind="stable")]
    if len(order) < 2:
        return None
    first = order[0]
    for second in order[1:]:
        if abs(diff[first] - diff[second]) > EXACT_MATCH:
            return (values[first] - values[second]) / (diff[first] - diff[second])
    return None


def _component(c: Corridor, x: np.ndarray, dimension: int, radius: float) -> Optional[float]:
    hits = c.cylinder_hits(dimension, x, radius)
    if len(hits) == 0:
        return None
    diff = c.metric.difference(c.states[hits], x)[:, dimension]
    dist = c.metric.distance(c.states[hits], x)
    values = c.values[hits]
    above, below = diff > 0.0, diff < 0.0
    if np.any(above) and np.any(below):
        a = np.flatnonzero(above)[np.argmin(dist[above])]
        b = np.flatnonzero(below)[np.argmin(dist[below])]
        return (values[a] - values[b]) / (diff[a] - diff[b])
    if np.any(above):
        return _one_side(diff, dist, values, above)
    if np.any(below):
        return _one_side(diff, dist, values, below)
    return None


def gradient(c: Corridor, x, r: float) -> np.ndarray:
    """
    Value gradient from nearest corridor points inside hyper-cylinders.

    For dimension i the cylinder holds points within ``r`` of ``x`` in the
    remaining dimensions. The component is the difference quotient between the
    closest point above and the closest point below x_i, or between the two
    closest on one side when the other is empty. The radius doubles up to 8r
    before giving up.

    Raises:
        GradientUnavailableError: A dimension has fewer than two usable points
    """
    if not r > 0.0:
        raise ArgumentError(f"cylinder radius must be positive, got {r}")
    x = np.asarray(x, dtype=float)
    grad = np.zeros(c.metric.dimension)
    for i in range(c.metric.dimension):
        radius = r
        for _ in range(MAX_RADIUS_DOUBLINGS + 1):
            component = _component(c, x, i, radius)
            if component is not None:
                break
            radius *= 2.0
        if component is None:
            raise GradientUnavailableError(i, x)
        grad[i] = component
    return grad


def query_value(c: Corridor, x, k: int = 4) -> float:
    """Inverse-distance-weighted mean value of the k nearest points."""
    if k < 1:
        raise ArgumentError(f"k must be at least 1, got {k}")
    if len(c) == 0:
        raise CorridorStateError("value query on an empty corridor")
    dist, idx = c.index.query(np.asarray(x, dtype=float), k)
    if dist[0] <= EXACT_MATCH:
        return float(c.values[idx[0]])
    weights = 1.0 / dist
    return float(np.dot(weights, c.values[idx]) / weights.sum())


def _sidecar_path(path: str) -> str:
    return os.path.splitext(path)[0] + ".json"


def save_corridor(c: Corridor, path: str, labels: Sequence[str]):
    """Write the corridor CSV and its JSON sidecar next to it."""
    c.to_frame(labels).to_csv(path, index=False)
    write_json(_sidecar_path(path), {
        "labels": list(labels),
        "metric_weights": list(c.metric.weights),
        "angular_dims": list(c.metric.angular_dims),
        "target": c.target.tolist(),
        **c.build_info,
    })
    logger.info(f"Wrote corridor with {len(c)} points to {path}")


def load_corridor(path: str) -> Corridor:
    sidecar = read_json(_sidecar_path(path))
    labels = sidecar.pop("labels")
    metric = StateMetric(tuple(sidecar.pop("metric_weights")), tuple(sidecar.pop("angular_dims")))
    target = sidecar.pop("target")
    frame = pd.read_csv(path)
    missing = [col for col in list(labels) + ["t", "value", "sample_idx"] if col not in frame.columns]
    if missing:
        raise ArgumentError(f"{path}: missing columns {missing}")
    return Corridor(frame[labels].to_numpy(dtype=float), frame["t"].to_numpy(dtype=float),
                    frame["value"].to_numpy(dtype=float), frame["sample_idx"].to_numpy(dtype=int),
                    metric, target, build_info=sidecar)
