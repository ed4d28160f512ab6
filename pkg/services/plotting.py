"""
Static SVG views of corridors and rollouts.
"""
import logging
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from dynamics.system import Trajectory  # noqa: E402
from services.corridor import Corridor  # noqa: E402
from services.oracle import dubins_distance  # noqa: E402

logger = logging.getLogger(__name__)

# fixed ids and no date stamp keep SVG output byte-stable
matplotlib.rcParams["svg.hashsalt"] = "corridor"
SVG_METADATA = {"Date": None}


def oracle_grid(extent: Sequence[float], heading: float, resolution: int, target,
                turn_radius: float = 1.0):
    """Oracle times on a position grid at a fixed heading."""
    xs = np.linspace(extent[0], extent[1], resolution)
    ys = np.linspace(extent[2], extent[3], resolution)
    values = np.array([[dubins_distance((x, y, heading), target, turn_radius)[0] for x in xs]
                       for y in ys])
    return xs, ys, values


def _extent(states: np.ndarray, pad: float = 1.0):
    low = states[:, :2].min(axis=0) - pad
    high = states[:, :2].max(axis=0) + pad
    return float(low[0]), float(high[0]), float(low[1]), float(high[1])


def plot_corridor(c: Corridor, path: str, contour_heading: Optional[float] = 0.0,
                  resolution: int = 40, turn_radius: float = 1.0):
    """
    Scatter corridor positions colored by value, over oracle contours.

    Args:
        c: Corridor
        path: Output SVG file
        contour_heading: Heading of the oracle slice; None skips the contours
        resolution: Contour grid points per axis
        turn_radius: Minimum turn radius for the oracle
    """
    fig, ax = plt.subplots(figsize=(8, 7))
    try:
        if contour_heading is not None and len(c):
            xs, ys, values = oracle_grid(_extent(c.states), contour_heading, resolution, c.target,
                                         turn_radius)
            lines = ax.contour(xs, ys, values, levels=10, colors="0.6", linewidths=0.8)
            ax.clabel(lines, fontsize=7, fmt="%.0f")
        points = ax.scatter(c.states[:, 0], c.states[:, 1], c=c.values, s=4, cmap="viridis")
        fig.colorbar(points, ax=ax, label="value (s)")
        ax.plot(c.target[0], c.target[1], marker="*", color="red", markersize=12)
        ax.set_xlabel("px")
        ax.set_ylabel("py")
        ax.set_aspect("equal", adjustable="box")
        fig.savefig(path, format="svg", metadata=SVG_METADATA)
    finally:
        plt.close(fig)
    logger.info(f"Wrote corridor plot to {path}")


def plot_trajectory(trajectory: Trajectory, path: str, target=(0.0, 0.0, 0.0),
                    corridor: Optional[Corridor] = None):
    """Rollout path in the plane, optionally over the corridor points."""
    fig, ax = plt.subplots(figsize=(8, 7))
    try:
        if corridor is not None and len(corridor):
            ax.scatter(corridor.states[:, 0], corridor.states[:, 1], s=2, color="0.75")
        ax.plot(trajectory.states[:, 0], trajectory.states[:, 1], color="tab:blue", linewidth=2)
        ax.plot(trajectory.start[0], trajectory.start[1], marker="o", color="tab:blue")
        ax.plot(target[0], target[1], marker="*", color="red", markersize=12)
        ax.set_xlabel("px")
        ax.set_ylabel("py")
        ax.set_aspect("equal", adjustable="box")
        fig.savefig(path, format="svg", metadata=SVG_METADATA)
    finally:
        plt.close(fig)
    logger.info(f"Wrote trajectory plot to {path}")
