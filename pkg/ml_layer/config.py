"""
Configuration settings for the machine learning layer.
"""
import os
import logging
import math
from dataclasses import dataclass, field, asdict
from typing import Any, Dict, Optional, Tuple

from utils.errors import ConfigurationError

logger = logging.getLogger(__name__)


class MLConfig:
    """Defaults for the inverse-dynamics network and its optimizer."""

    # Base directory for model storage
    MODELS_DIR = os.path.join(os.path.dirname(__file__), "saved_models")

    # Network settings (widths of the P, D, U and X layers)
    NETWORK = {
        "recurrence_depth": 3,
        "layer_widths": (10, 10, 6, 75),
        "primitive_codebook": (-1.0, 0.0, 1.0),
        "max_duration": 20.0,
        "samples_per_horizon": 64,
    }

    # Resilient backpropagation
    RPROP = {
        "eta_plus": 1.2,
        "eta_minus": 0.5,
        "initial_step": 0.07,
        "min_step": 1e-6,
        "max_step": 50.0,
    }

    # Training settings
    PLANT_EPOCHS = 200
    WARMUP_EPOCHS = 300
    RETRAIN_EPOCHS = 40

    @classmethod
    def get_model_path(cls, model_name):
        """Get the path for a specific model."""
        return os.path.join(cls.MODELS_DIR, f"{model_name}.json")


@dataclass(frozen=True)
class RpropConfig:
    eta_plus: float = MLConfig.RPROP["eta_plus"]
    eta_minus: float = MLConfig.RPROP["eta_minus"]
    initial_step: float = MLConfig.RPROP["initial_step"]
    min_step: float = MLConfig.RPROP["min_step"]
    max_step: float = MLConfig.RPROP["max_step"]

    def validate(self):
        if not (self.eta_plus > 1.0 and 0.0 < self.eta_minus < 1.0):
            raise ConfigurationError("need eta_plus > 1 and 0 < eta_minus < 1", field="network.rprop")
        if not (0.0 < self.min_step <= self.initial_step <= self.max_step):
            raise ConfigurationError("need 0 < min_step <= initial_step <= max_step",
                                     field="network.rprop")
        return self


@dataclass(frozen=True)
class NetConfig:
    """
    Shape and decoding parameters of the recurrent inverse-dynamics network.

    Attributes:
        recurrence_depth: Number of unrolled steps N (one segment per step)
        layer_widths: Widths of the P, D, U and X layers
        primitive_codebook: Admissible primitive values
        max_duration: Horizon T_bar; decoded durations are clamped to [0, T_bar]
        control_sample_step: Loss discretization step; T_bar / 64 when omitted
        state_dim: Dimension of the state fed into the X layer (zero-padded)
        rprop: Optimizer constants
    """
    recurrence_depth: int = MLConfig.NETWORK["recurrence_depth"]
    layer_widths: Tuple[int, int, int, int] = MLConfig.NETWORK["layer_widths"]
    primitive_codebook: Tuple[float, ...] = MLConfig.NETWORK["primitive_codebook"]
    max_duration: float = MLConfig.NETWORK["max_duration"]
    control_sample_step: Optional[float] = None
    state_dim: int = 3
    rprop: RpropConfig = field(default_factory=RpropConfig)

    def __post_init__(self):
        object.__setattr__(self, "layer_widths", tuple(int(w) for w in self.layer_widths))
        object.__setattr__(self, "primitive_codebook",
                           tuple(float(u) for u in self.primitive_codebook))
        if self.control_sample_step is None:
            object.__setattr__(self, "control_sample_step",
                               self.max_duration / MLConfig.NETWORK["samples_per_horizon"])
        if isinstance(self.rprop, dict):
            object.__setattr__(self, "rprop", RpropConfig(**self.rprop))

    @property
    def width_p(self) -> int:
        return self.layer_widths[0]

    @property
    def width_d(self) -> int:
        return self.layer_widths[1]

    @property
    def width_u(self) -> int:
        return self.layer_widths[2]

    @property
    def width_x(self) -> int:
        return self.layer_widths[3]

    @property
    def grid_size(self) -> int:
        """Number of samples in the discretized control vector."""
        return int(math.ceil(self.max_duration / self.control_sample_step - 1e-9)) + 1

    def validate(self) -> "NetConfig":
        """Check every field; raise ConfigurationError naming the first bad one."""
        if self.recurrence_depth < 1:
            raise ConfigurationError("must be >= 1", field="network.recurrence_depth")
        if len(self.layer_widths) != 4 or any(w <= 0 for w in self.layer_widths):
            raise ConfigurationError("need four positive widths", field="network.layer_widths")
        if self.width_u < 2:
            raise ConfigurationError("U layer needs a primitive and a duration channel",
                                     field="network.layer_widths")
        if self.width_x < self.state_dim:
            raise ConfigurationError(f"X layer must hold the {self.state_dim}-d state",
                                     field="network.layer_widths")
        if not self.primitive_codebook:
            raise ConfigurationError("must not be empty", field="network.primitive_codebook")
        if not self.max_duration > 0.0:
            raise ConfigurationError("must be positive", field="network.max_duration")
        if not self.control_sample_step > 0.0:
            raise ConfigurationError("must be positive", field="network.control_sample_step")
        self.rprop.validate()
        return self

    def to_dict(self) -> Dict[str, Any]:
        payload = asdict(self)
        payload["layer_widths"] = list(self.layer_widths)
        payload["primitive_codebook"] = list(self.primitive_codebook)
        return payload

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "NetConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(payload) - known
        if unknown:
            raise ConfigurationError(f"unknown keys {sorted(unknown)}", field="network")
        return cls(**payload)
