"""
Dubins car: unit-speed planar vehicle with bounded turn rate.

State (px, py, theta), control u in [-1, 1] scaled by the maximum turn rate.
"""
import logging

import numpy as np

from dynamics.system import SystemModel
from utils.errors import ConfigurationError

logger = logging.getLogger(__name__)

DUBINS_LABELS = ("px", "py", "theta")
DUBINS_PRIMITIVES = (-1.0, 0.0, 1.0)


def dubins_model(speed: float = 1.0, max_turn: float = 1.0,
                 heading_weight: float = 1.0) -> SystemModel:
    """
    Build the Dubins car model.

    Args:
        speed: Forward speed in m/s
        max_turn: Turn rate in rad/s reached at |u| = 1
        heading_weight: Weight of the heading coordinate in the state metric

    Returns:
        SystemModel with codebook {-1, 0, 1}
    """
    if speed <= 0.0 or max_turn <= 0.0:
        raise ConfigurationError(f"speed and max_turn must be positive, got {speed}, {max_turn}",
                                 field="model")
    if heading_weight <= 0.0:
        raise ConfigurationError(f"heading weight must be positive, got {heading_weight}",
                                 field="model.heading_weight")

    def vector_field(x: np.ndarray, u: np.ndarray) -> np.ndarray:
        theta = x[:, 2]
        return np.stack((speed * np.cos(theta), speed * np.sin(theta), max_turn * u), axis=1)

    return SystemModel(
        name="dubins",
        dimension=3,
        control_set=DUBINS_PRIMITIVES,
        vector_field=vector_field,
        control_bounds=(-1.0, 1.0),
        state_labels=DUBINS_LABELS,
        angular_dims=(2,),
        position_dims=(0, 1),
        metric_weights=(1.0, 1.0, float(heading_weight)),
        parameters={"speed": float(speed), "max_turn": float(max_turn),
                    "turn_radius": float(speed) / float(max_turn)},
    )


MODELS = {
    "dubins": dubins_model,
}


def build_model(name: str, **kwargs) -> SystemModel:
    """Look up a model factory by name."""
    try:
        factory = MODELS[name]
    except KeyError:
        raise ConfigurationError(f"unknown model '{name}', expected one of {sorted(MODELS)}",
                                 field="model.name")
    return factory(**kwargs)
