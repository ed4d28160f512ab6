"""
Stochastic accept-reject filters for curating training samples.

exp_filter keeps a state with probability exp(-lambda * d), d being its
distance to an accept region. length_filter thins out neighbourhoods by
removing costly samples near cheaper ones.

Both take the caller's random stream; each exp_filter call consumes exactly
one uniform draw, so filtering a batch with exp_filter_mask yields the same
decisions as calling exp_filter in a loop.
"""
import logging
from dataclasses import dataclass
from typing import List, Sequence, TypeVar

import numpy as np

from data_pipeline.regions import AcceptRegion, contains
from utils.errors import ArgumentError
from utils.geometry import StateMetric
from utils.spatial import PeriodicIndex

logger = logging.getLogger(__name__)

T = TypeVar("T")


@dataclass(frozen=True)
class FilterParams:
    """
    Attributes:
        lam: Decay rate of the exponential filter (1/m)
        lambda_cost: Decay rate of the length filter (1/s of cost)
        neighbourhood: Length-filter neighbourhood radius D (m)
    """
    lam: float
    lambda_cost: float
    neighbourhood: float

    def __post_init__(self):
        for name in ("lam", "lambda_cost", "neighbourhood"):
            if not getattr(self, name) > 0.0:
                raise ArgumentError(f"{name} must be strictly positive, got {getattr(self, name)}")


def _keep_probability(distance, lam: float):
    # exp(-inf * 0) would be nan; points at distance 0 are always kept
    distance = np.asarray(distance, dtype=float)
    with np.errstate(invalid="ignore"):
        prob = np.exp(-lam * distance)
    return np.where(distance <= 0.0, 1.0, prob)


def exp_filter(x, region: AcceptRegion, lam: float, rng: np.random.Generator) -> bool:
    """
    Exponential distance filter.

    Draws beta uniformly from [0, lam] and keeps ``x`` when it lies in the
    region or when beta <= lam * exp(-lam * d). Written as a test on the unit
    draw so that lam = inf is handled.

    Args:
        x: State
        region: Accept region
        lam: Decay rate (> 0, may be inf)
        rng: Random stream; exactly one uniform value is drawn

    Returns:
        True when the state is kept
    """
    if not lam > 0.0:
        raise ArgumentError(f"lambda must be positive, got {lam}")
    draw = rng.random()
    if contains(x, region):
        return True
    return bool(draw <= _keep_probability(region.distance(x), lam))


def exp_filter_mask(states, region: AcceptRegion, lam: float,
                    rng: np.random.Generator) -> np.ndarray:
    """Vectorized exp_filter over the rows of ``states``."""
    if not lam > 0.0:
        raise ArgumentError(f"lambda must be positive, got {lam}")
    states = np.atleast_2d(np.asarray(states, dtype=float))
    if len(states) == 0:
        return np.zeros(0, dtype=bool)
    draws = rng.random(len(states))
    return draws <= _keep_probability(region.distances(states), lam)


def length_filter(samples: Sequence[T], lambda_cost: float, neighbourhood: float,
                  rng: np.random.Generator, metric: StateMetric) -> List[T]:
    """
    Cost-based thinning of crowded neighbourhoods.

    Samples are visited in order of increasing cost. Every surviving neighbour
    within ``neighbourhood`` of the visited sample is removed when a fresh
    beta ~ U[0, lambda_cost] exceeds lambda_cost * exp(-lambda_cost * cost),
    i.e. with probability 1 - exp(-lambda_cost * cost).

    Args:
        samples: Objects with ``state`` and ``cost`` attributes
        lambda_cost: Cost decay rate
        neighbourhood: Neighbourhood radius D in the state metric
        rng: Random stream
        metric: State metric for neighbourhood queries

    Returns:
        Survivors in their original relative order
    """
    if not (lambda_cost > 0.0 and neighbourhood > 0.0):
        raise ArgumentError("lambda_cost and neighbourhood must be positive")
    if not samples:
        return []
    costs = np.array([s.cost for s in samples], dtype=float)
    order = np.argsort(costs, kind="stable")
    rank = np.empty(len(samples), dtype=int)
    rank[order] = np.arange(len(samples))
    index = PeriodicIndex(np.stack([np.asarray(s.state, dtype=float) for s in samples]), metric)
    survival = 1.0 - removal_probability(costs, lambda_cost)

    removed = np.zeros(len(samples), dtype=bool)
    for i in order:
        if removed[i]:
            continue
        neighbours = [j for j in index.query_radius(samples[i].state, neighbourhood)
                      if j != i and not removed[j]]
        for j in sorted(neighbours, key=lambda j: rank[j]):
            if rng.random() > survival[j]:
                removed[j] = True
    survivors = [s for s, gone in zip(samples, removed) if not gone]
    logger.debug(f"length_filter kept {len(survivors)}/{len(samples)} samples")
    return survivors


def removal_probability(cost, lambda_cost: float):
    """
    Per-test removal probability of a neighbour with the given cost(s).

    Same event as beta > lambda_cost * exp(-lambda_cost * cost) for
    beta ~ U[0, lambda_cost].
    """
    return 1.0 - np.exp(-lambda_cost * np.asarray(cost, dtype=float))
