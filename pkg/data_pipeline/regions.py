"""
Accept regions used by the exponential filter.

Every region answers three questions for a state: is it inside, what is the
closest member, and how far away is that member. Sphere and point-set regions
live in the full weighted state metric. The cone constrains position
coordinates only; headings pass through untouched.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence, Tuple

import numpy as np

from utils.errors import ConfigurationError, GeometryError
from utils.geometry import StateMetric, unit
from utils.spatial import PeriodicIndex

logger = logging.getLogger(__name__)

# Half-angles this close to pi/2 are treated as a slab
_RIGHT_ANGLE_SLACK = 1e-12


class AcceptRegion:
    """Interface shared by all region variants."""

    def contains(self, x) -> bool:
        return self.distance(x) <= 0.0

    def distance(self, x) -> float:
        return float(self.distances(np.atleast_2d(x))[0])

    def distances(self, states: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def project(self, x) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class WholeSpace(AcceptRegion):
    """Region containing every state."""

    def distances(self, states: np.ndarray) -> np.ndarray:
        return np.zeros(len(np.atleast_2d(states)))

    def project(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float)


@dataclass(frozen=True)
class Sphere(AcceptRegion):
    """Closed ball of ``radius`` around ``center`` in the state metric."""
    center: Tuple[float, ...]
    radius: float
    metric: StateMetric

    def __post_init__(self):
        if not self.radius > 0.0:
            raise ConfigurationError(f"sphere radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    def distances(self, states: np.ndarray) -> np.ndarray:
        reach = self.metric.distance(np.atleast_2d(states), np.asarray(self.center))
        return np.maximum(reach - self.radius, 0.0)

    def project(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        delta = self.metric.difference(x, np.asarray(self.center))
        reach = float(np.linalg.norm(delta * np.asarray(self.metric.weights)))
        if reach <= self.radius:
            return x
        # pull x radially inward; keeps its own heading branch
        return x - delta * (1.0 - self.radius / reach)


@dataclass(frozen=True)
class Cone(AcceptRegion):
    """
    Solid cone over the position coordinates.

    Attributes:
        apex: Full state; only its position coordinates matter
        axis: Unit vector in position space
        half_angle: Opening half-angle in (0, pi/2]
        length: Extent along the axis
        position_dims: Indices of the position coordinates
    """
    apex: Tuple[float, ...]
    axis: Tuple[float, ...]
    half_angle: float
    length: float
    position_dims: Tuple[int, ...] = (0, 1)

    def __post_init__(self):
        if not (0.0 < self.half_angle <= math.pi / 2 + _RIGHT_ANGLE_SLACK):
            raise ConfigurationError(f"cone half-angle {self.half_angle} outside (0, pi/2]")
        if not self.length > 0.0:
            raise ConfigurationError(f"cone length must be positive, got {self.length}")
        axis = np.asarray(self.axis, dtype=float)
        if len(axis) != len(self.position_dims):
            raise ConfigurationError("cone axis must live in position space")
        object.__setattr__(self, "axis", tuple(unit(axis)))
        object.__setattr__(self, "apex", tuple(float(c) for c in self.apex))

    @property
    def is_slab(self) -> bool:
        return self.half_angle >= math.pi / 2 - _RIGHT_ANGLE_SLACK

    def _decompose(self, states: np.ndarray):
        dims = list(self.position_dims)
        rel = np.atleast_2d(states)[:, dims] - np.asarray(self.apex)[dims]
        axis = np.asarray(self.axis)
        along = rel @ axis
        radial_vec = rel - along[:, None] * axis
        radial = np.linalg.norm(radial_vec, axis=1)
        return along, radial, radial_vec

    def _project_plane(self, along: np.ndarray, radial: np.ndarray):
        """Nearest point of the cone's cross-section in the (along, radial) half-plane."""
        if self.is_slab:
            return np.clip(along, 0.0, self.length), radial
        rim = self.length * math.tan(self.half_angle)
        # slanted side from (0, 0) to (L, rim)
        side = np.array([self.length, rim])
        s = np.clip((along * side[0] + radial * side[1]) / (side @ side), 0.0, 1.0)
        slant_a, slant_r = s * side[0], s * side[1]
        # cap from (L, 0) to (L, rim)
        cap_a, cap_r = np.full_like(along, self.length), np.clip(radial, 0.0, rim)
        use_cap = (cap_a - along) ** 2 + (cap_r - radial) ** 2 < (slant_a - along) ** 2 + (slant_r - radial) ** 2
        inside = (along >= 0.0) & (along <= self.length) & (radial <= along * math.tan(self.half_angle))
        proj_a = np.where(inside, along, np.where(use_cap, cap_a, slant_a))
        proj_r = np.where(inside, radial, np.where(use_cap, cap_r, slant_r))
        return proj_a, proj_r

    def distances(self, states: np.ndarray) -> np.ndarray:
        along, radial, _ = self._decompose(states)
        proj_a, proj_r = self._project_plane(along, radial)
        gap = np.hypot(along - proj_a, radial - proj_r)
        return np.where(gap <= 1e-12, 0.0, gap)

    def project(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        along, radial, radial_vec = self._decompose(x[None, :])
        proj_a, proj_r = self._project_plane(along, radial)
        direction = radial_vec[0] / radial[0] if radial[0] > 0.0 else np.zeros_like(radial_vec[0])
        position = np.asarray(self.apex)[list(self.position_dims)] + proj_a[0] * np.asarray(self.axis) \
            + proj_r[0] * direction
        out = np.array(x, copy=True)
        out[list(self.position_dims)] = position
        return out


@dataclass(frozen=True, eq=False)
class PointSet(AcceptRegion):
    """Union of closed balls of radius ``tolerance`` around the given points."""
    points: np.ndarray
    tolerance: float
    metric: StateMetric
    _index: PeriodicIndex = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.tolerance < 0.0:
            raise ConfigurationError(f"point-set tolerance must be >= 0, got {self.tolerance}")
        points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if len(points) == 0:
            raise ConfigurationError("point-set region needs at least one point")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "_index", PeriodicIndex(points, self.metric))

    def _nearest(self, x) -> Tuple[float, int]:
        dist, idx = self._index.query(x, 1)
        return float(dist[0]), int(idx[0])

    def distances(self, states: np.ndarray) -> np.ndarray:
        states = np.atleast_2d(states)
        return np.array([max(self._nearest(s)[0] - self.tolerance, 0.0) for s in states])

    def project(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        dist, idx = self._nearest(x)
        if dist <= self.tolerance:
            return x
        delta = self.metric.difference(x, self.points[idx])
        return x - delta * (1.0 - self.tolerance / dist)


def project(x, region: AcceptRegion) -> np.ndarray:
    """Closest member of ``region`` to ``x``; ``x`` itself when inside."""
    return region.project(x)


def contains(x, region: AcceptRegion) -> bool:
    return region.contains(x)


def min_cone(apex, points: Sequence, margin: float, position_dims: Sequence[int] = (0, 1)) -> Cone:
    """
    Smallest axis-aligned-to-mean cone from ``apex`` containing ``points``.

    Args:
        apex: Cone tip (full state)
        points: States to enclose
        margin: Added to the half-angle (radians) and to the length (meters)
        position_dims: Position coordinates

    Returns:
        Cone whose half-angle is capped at pi/2
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if len(points) == 0:
        raise GeometryError("min_cone needs at least one point")
    dims = list(position_dims)
    tip = np.asarray(apex, dtype=float)[dims]
    rel = points[:, dims] - tip
    reach = np.linalg.norm(rel, axis=1)
    if np.all(reach <= 1e-12):
        raise GeometryError("every point coincides with the cone apex")
    mean = np.mean(rel[reach > 1e-12] / reach[reach > 1e-12, None], axis=0)
    if np.linalg.norm(mean) <= 1e-12:
        raise GeometryError("points surround the apex; no cone axis exists")
    axis = unit(mean)
    cosines = np.clip((rel[reach > 1e-12] @ axis) / reach[reach > 1e-12], -1.0, 1.0)
    half_angle = min(float(np.max(np.arccos(cosines))) + margin, math.pi / 2)
    length = float(np.max(reach)) + margin
    logger.debug(f"min_cone: half-angle {half_angle:.3f} rad, length {length:.3f}")
    return Cone(apex=tuple(np.asarray(apex, dtype=float)), axis=tuple(axis),
                half_angle=half_angle, length=length, position_dims=tuple(dims))
