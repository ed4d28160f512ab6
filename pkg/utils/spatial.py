"""
Nearest-neighbour index over states with wrapped angular coordinates.

Wraps scikit-learn's KDTree. Angular coordinates are stored wrapped and each
point is duplicated at +/- one period, so Euclidean queries on the embedded
points give exact metric neighbours for radii below half a period.
"""
import itertools
import logging
from typing import Optional, Sequence, Tuple

import numpy as np
from sklearn.neighbors import KDTree

from utils.geometry import StateMetric

logger = logging.getLogger(__name__)


class PeriodicIndex:
    """Exact neighbour queries in a StateMetric, optionally on a subset of dimensions."""

    def __init__(self, states, metric: StateMetric, dims: Optional[Sequence[int]] = None,
                 leaf_size: int = 40):
        """
        Build the index.

        Args:
            states: Array of shape (m, n)
            metric: Metric providing weights and angular dimensions
            dims: Dimensions to index (all when None); used for cylinder
                searches that ignore one axis
            leaf_size: KDTree leaf size
        """
        states = np.atleast_2d(np.asarray(states, dtype=float))
        self.metric = metric
        self.dims = tuple(range(metric.dimension)) if dims is None else tuple(dims)
        self.size = len(states)

        embedded = metric.embed(states)[:, self.dims]
        periodic = [k for k, dim in enumerate(self.dims) if dim in metric.angular_dims]
        periods = [2.0 * np.pi * metric.weights[self.dims[k]] for k in periodic]

        copies, owners = [], []
        for shifts in itertools.product((0.0, -1.0, 1.0), repeat=len(periodic)):
            shifted = np.array(embedded, copy=True)
            for k, shift, period in zip(periodic, shifts, periods):
                shifted[:, k] += shift * period
            copies.append(shifted)
            owners.append(np.arange(self.size))
        self._points = np.vstack(copies) if copies else embedded
        self._owners = np.concatenate(owners) if owners else np.arange(self.size)
        self._tree = KDTree(self._points, leaf_size=leaf_size) if self.size else None

    def _embed_query(self, state) -> np.ndarray:
        return self.metric.embed(state)[:, self.dims]

    def query_radius(self, state, radius: float) -> np.ndarray:
        """Original indices within ``radius`` of ``state`` (sorted ascending)."""
        if self._tree is None:
            return np.empty(0, dtype=int)
        hits = self._tree.query_radius(self._embed_query(state), r=radius)[0]
        return np.unique(self._owners[hits])

    def query(self, state, k: int) -> Tuple[np.ndarray, np.ndarray]:
        """
        The k nearest distinct points.

        Returns:
            (distances, indices), both ordered by increasing distance
        """
        if self._tree is None:
            return np.empty(0), np.empty(0, dtype=int)
        k = min(k, self.size)
        candidates = min(len(self._points), k * (len(self._points) // max(self.size, 1)))
        dist, hits = self._tree.query(self._embed_query(state), k=candidates)
        seen, out_d, out_i = set(), [], []
        for d, h in zip(dist[0], hits[0]):
            owner = int(self._owners[h])
            if owner in seen:
                continue
            seen.add(owner)
            out_d.append(d)
            out_i.append(owner)
            if len(out_i) == k:
                break
        return np.asarray(out_d), np.asarray(out_i, dtype=int)
