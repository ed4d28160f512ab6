"""
Shared fixtures: the Dubins model, seeded random streams and small corridors.
"""
import math

import numpy as np
import pytest

from data_pipeline.samples import certify_samples
from dynamics.dubins import dubins_model
from dynamics.system import ControlSequence, integrate_backward
from services.corridor import Corridor
from utils.helpers import make_rng

ORIGIN = (0.0, 0.0, 0.0)


@pytest.fixture
def dubins():
    return dubins_model()


@pytest.fixture
def rng():
    return make_rng(1234)


def make_samples(model, sequences, target=ORIGIN, dt=0.01):
    """Certified samples whose states come from backward integration of ``sequences``."""
    states = np.array([integrate_backward(model, target, seq, dt).end for seq in sequences])
    return certify_samples(model, states, sequences, target, dt)


@pytest.fixture
def straight_samples(dubins):
    """A single straight approach to the origin along the x axis."""
    sequences = [ControlSequence((0.0,), (12.0,))]
    return make_samples(dubins, sequences)


def linear_field_corridor(metric, slope=2.0, pitch=0.25, extent=2.0):
    """Grid corridor over px, py, theta with value = slope * px."""
    axis = np.arange(-extent, extent + 1e-9, pitch)
    headings = np.arange(-1.0, 1.0 + 1e-9, pitch)
    grid = np.array([(x, y, h) for x in axis for y in axis for h in headings])
    values = slope * grid[:, 0]
    return Corridor(grid, -values, values, np.zeros(len(grid), dtype=int), metric, ORIGIN)


def grid_corridor(metric, value_fn, px_range=(-4.0, 1.0), pitch=0.25):
    """Grid over px in ``px_range``, py and theta in [-1, 1], valued by ``value_fn``."""
    xs = np.arange(px_range[0], px_range[1] + 1e-9, pitch)
    cross = np.arange(-1.0, 1.0 + 1e-9, pitch)
    grid = np.array([(x, y, h) for x in xs for y in cross for h in cross])
    values = np.array([value_fn(s) for s in grid])
    return Corridor(grid, -values, values, np.zeros(len(grid), dtype=int), metric, ORIGIN)


@pytest.fixture
def quarter_turn():
    return ControlSequence((1.0,), (math.pi / 2,))
