"""
Angle handling and the weighted state metric shared by filters, corridor and
synthesis.
"""
import math
from dataclasses import dataclass, field
from typing import Sequence, Tuple

import numpy as np


def wrap_angle(angle):
    """Wrap angles to (-pi, pi]. Works on scalars and arrays."""
    wrapped = np.mod(np.asarray(angle, dtype=float) + math.pi, 2.0 * math.pi) - math.pi
    # np.mod maps +pi to -pi; keep +pi on the closed end
    wrapped = np.where(wrapped == -math.pi, math.pi, wrapped)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


@dataclass(frozen=True)
class StateMetric:
    """
    Weighted Euclidean metric with wrapped angular coordinates.

    Attributes:
        weights: Per-coordinate weight applied after differencing
        angular_dims: Coordinates compared modulo 2*pi
    """
    weights: Tuple[float, ...]
    angular_dims: Tuple[int, ...] = field(default_factory=tuple)

    @property
    def dimension(self) -> int:
        return len(self.weights)

    def difference(self, a, b) -> np.ndarray:
        """Signed difference a - b with angular coordinates wrapped to (-pi, pi]."""
        diff = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
        if self.angular_dims:
            diff = np.array(diff, dtype=float, copy=True)
            for dim in self.angular_dims:
                diff[..., dim] = wrap_angle(diff[..., dim])
        return diff

    def weighted_difference(self, a, b) -> np.ndarray:
        return self.difference(a, b) * np.asarray(self.weights, dtype=float)

    def distance(self, a, b):
        """Distance between states; broadcasts over leading axes."""
        return np.linalg.norm(self.weighted_difference(a, b), axis=-1)

    def embed(self, states) -> np.ndarray:
        """
        Scale coordinates by the metric weights and wrap angles.

        Euclidean distances between embedded points equal metric distances
        as long as no angular difference crosses the wrap seam; the spatial
        index adds periodic images to cover the seam.
        """
        states = np.atleast_2d(np.asarray(states, dtype=float))
        embedded = np.array(states, copy=True)
        for dim in self.angular_dims:
            embedded[:, dim] = wrap_angle(embedded[:, dim])
        return embedded * np.asarray(self.weights, dtype=float)


def unit(vector: Sequence[float]) -> np.ndarray:
    vector = np.asarray(vector, dtype=float)
    norm = np.linalg.norm(vector)
    if norm == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return vector / norm
