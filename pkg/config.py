import os
import copy
import json
import math
import logging

from data_pipeline.dynamic_training import FilterSchedule, TrainingSettings
from dynamics.dubins import MODELS, build_model
from dynamics.system import COST_FUNCTIONS
from ml_layer.config import MLConfig, NetConfig
from services.synthesis import SynthesisConfig
from utils.errors import ConfigurationError

logger = logging.getLogger(__name__)


# Base configuration class
class Config:
    # Problem
    MODEL = {"name": "dubins", "speed": 1.0, "max_turn": 1.0, "heading_weight": 1.0}
    X_BAR = [-10.0, 0.0, 0.0]
    X_TARGET = [0.0, 0.0, 0.0]
    SEED = 0
    OUTPUT_DIR = os.environ.get("CORRIDOR_OUTPUT_DIR", "runs/default")

    # Network (see ml_layer.config.MLConfig)
    NETWORK = {
        "recurrence_depth": MLConfig.NETWORK["recurrence_depth"],
        "layer_widths": list(MLConfig.NETWORK["layer_widths"]),
        "primitive_codebook": list(MLConfig.NETWORK["primitive_codebook"]),
        "max_duration": MLConfig.NETWORK["max_duration"],
        "control_sample_step": None,
        "state_dim": 3,
        "rprop": dict(MLConfig.RPROP),
    }

    # Warm-up datasets; 400 trajectories x 50 instants = 20,000 plant pairs
    WARMUP = {
        "d1_samples": 400,
        "d1_max_duration": 100.0,
        "d1_lambda": 0.05,
        "pair_times": 50,
        "d2_samples": 300,
        "d2_max_duration": 2.0 * math.pi,
        "segments": 3,
        "suboptimal_fraction": 0.0,
    }

    FILTERS = {
        "lambda_cost": 1.0,
        "neighbourhood": 0.5,
        "length_filter_enabled": True,
        "cone_margin": 0.1,
    }

    SCHEDULE = {
        "explore_until": 30,
        "guide_until": 80,
        "lambda_cone": 0.5,
        "lambda_sphere": 0.2,
        "explore_factor": 0.5,
        "ramp": 1.5,
        "ramp_every": 10,
        "exploit_factor": 5.0,
    }

    TRAINING = {
        "epsilon": 1.0,
        "query_count": 500,
        "plant_epochs": MLConfig.PLANT_EPOCHS,
        "warmup_epochs": MLConfig.WARMUP_EPOCHS,
        "retrain_epochs": MLConfig.RETRAIN_EPOCHS,
        "max_iterations": 200,
        "stop_fraction": 0.5,
        "stop_streak": 3,
        "dt": 0.01,
        "running_cost": "time",
    }

    CORRIDOR = {"spacing": 0.1, "query_k": 4}

    SYNTHESIS = {
        "control_dt": 0.1,
        "reach_tol": 0.5,
        "max_time": 60.0,
        "cylinder_r": 0.5,
        "dt": 0.01,
        "tie_tol": 1e-12,
        "n_jobs": 1,
    }

    ORACLE = {"grid": 0.05, "tol": 0.2}

    # Output file names inside OUTPUT_DIR
    FILES = {
        "d1": "warmup_d1.csv",
        "d2": "warmup_d2.csv",
        "weights": "weights.json",
        "samples": "samples.csv",
        "log": "iterations.jsonl",
        "snapshot": "snapshot.joblib",
        "corridor": "corridor.csv",
        "rollouts": "rollouts",
        "report": "report.csv",
        "plots": "plots",
    }

    @classmethod
    def defaults(cls):
        """Nested dict of every run setting."""
        return copy.deepcopy({
            "model": cls.MODEL,
            "x_bar": cls.X_BAR,
            "x_target": cls.X_TARGET,
            "seed": cls.SEED,
            "output_dir": cls.OUTPUT_DIR,
            "network": cls.NETWORK,
            "warmup": cls.WARMUP,
            "filters": cls.FILTERS,
            "schedule": cls.SCHEDULE,
            "training": cls.TRAINING,
            "corridor": cls.CORRIDOR,
            "synthesis": cls.SYNTHESIS,
            "oracle": cls.ORACLE,
        })


def parse_value(text):
    """JSON value when it parses, the raw string otherwise."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _merge(base, update, prefix=""):
    for key, value in update.items():
        name = f"{prefix}{key}"
        if key not in base:
            raise ConfigurationError("unknown key", field=name)
        if isinstance(base[key], dict) and key != "rprop":
            if not isinstance(value, dict):
                raise ConfigurationError("expected an object", field=name)
            _merge(base[key], value, prefix=f"{name}.")
        elif isinstance(base[key], dict):
            unknown = set(value) - set(base[key]) if isinstance(value, dict) else None
            if unknown is None:
                raise ConfigurationError("expected an object", field=name)
            if unknown:
                raise ConfigurationError(f"unknown keys {sorted(unknown)}", field=name)
            base[key].update(value)
        else:
            base[key] = value
    return base


class RunConfig:
    """
    Settings of one run: defaults from Config, one JSON document merged over
    them, then ``dotted.key=value`` overrides.
    """

    def __init__(self, values=None):
        self.values = values if values is not None else Config.defaults()

    @classmethod
    def from_dict(cls, payload=None, overrides=()):
        values = _merge(Config.defaults(), payload or {})
        config = cls(values)
        for item in overrides:
            config.set(item)
        return config

    @classmethod
    def from_file(cls, path=None, overrides=()):
        payload = {}
        if path:
            try:
                with open(path, 'r', encoding='utf-8') as f:
                    payload = json.load(f)
            except (OSError, json.JSONDecodeError) as e:
                raise ConfigurationError(f"cannot read {path}: {e}", field="config")
            if not isinstance(payload, dict):
                raise ConfigurationError("top level must be an object", field="config")
        return cls.from_dict(payload, overrides)

    def set(self, assignment):
        """Apply one ``dotted.key=value`` override."""
        if "=" not in assignment:
            raise ConfigurationError(f"expected key=value, got '{assignment}'", field="--set")
        dotted, text = assignment.split("=", 1)
        keys = dotted.strip().split(".")
        update = parse_value(text)
        for key in reversed(keys):
            update = {key: update}
        _merge(self.values, update)
        return self

    def to_dict(self):
        return copy.deepcopy(self.values)

    def __getitem__(self, key):
        return self.values[key]

    # -- validation ---------------------------------------------------------

    def _number(self, section, key, low=None, strict=True, integer=False):
        value = self.values[section][key] if key else self.values[section]
        name = f"{section}.{key}" if key else section
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise ConfigurationError(f"expected a number, got {value!r}", field=name)
        if integer and int(value) != value:
            raise ConfigurationError(f"expected an integer, got {value!r}", field=name)
        if low is not None and (value <= low if strict else value < low):
            relation = ">" if strict else ">="
            raise ConfigurationError(f"must be {relation} {low}, got {value!r}", field=name)
        return value

    def _state(self, key, dimension):
        value = self.values[key]
        if (not isinstance(value, list) or len(value) != dimension
                or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value)):
            raise ConfigurationError(f"expected {dimension} numbers, got {value!r}", field=key)

    def validate(self):
        """Check every setting before any computation; raise ConfigurationError naming the field."""
        model = self.values["model"]
        if model.get("name") not in MODELS:
            raise ConfigurationError(f"unknown model {model.get('name')!r}", field="model.name")
        for key in ("speed", "max_turn", "heading_weight"):
            self._number("model", key, low=0.0)
        dimension = self.build_model().dimension
        self._state("x_bar", dimension)
        self._state("x_target", dimension)
        self._number("seed", None, low=0, strict=False, integer=True)
        if not isinstance(self.values["output_dir"], str) or not self.values["output_dir"]:
            raise ConfigurationError("expected a non-empty path", field="output_dir")

        self.net_config()

        for key in ("d1_samples", "d2_samples", "pair_times", "segments"):
            self._number("warmup", key, low=0, integer=True)
        for key in ("d1_max_duration", "d2_max_duration", "d1_lambda"):
            self._number("warmup", key, low=0.0)
        self._number("warmup", "suboptimal_fraction", low=0.0, strict=False)
        if self.values["warmup"]["suboptimal_fraction"] > 1.0:
            raise ConfigurationError("must be <= 1", field="warmup.suboptimal_fraction")

        for key in ("lambda_cost", "neighbourhood"):
            self._number("filters", key, low=0.0)
        self._number("filters", "cone_margin", low=0.0, strict=False)
        if not isinstance(self.values["filters"]["length_filter_enabled"], bool):
            raise ConfigurationError("expected true or false", field="filters.length_filter_enabled")

        schedule = self.values["schedule"]
        for key in ("explore_until", "guide_until", "ramp_every"):
            self._number("schedule", key, low=0, strict=key == "ramp_every", integer=True)
        if schedule["guide_until"] < schedule["explore_until"]:
            raise ConfigurationError("must not precede explore_until", field="schedule.guide_until")
        for key in ("lambda_cone", "lambda_sphere", "explore_factor", "ramp", "exploit_factor"):
            self._number("schedule", key, low=0.0)

        for key in ("query_count", "max_iterations", "stop_streak"):
            self._number("training", key, low=0, integer=True)
        for key in ("plant_epochs", "warmup_epochs", "retrain_epochs"):
            self._number("training", key, low=0, strict=False, integer=True)
        for key in ("epsilon", "dt"):
            self._number("training", key, low=0.0)
        self._number("training", "stop_fraction", low=0.0, strict=False)
        if self.values["training"]["running_cost"] not in COST_FUNCTIONS:
            raise ConfigurationError(f"expected one of {sorted(COST_FUNCTIONS)}",
                                     field="training.running_cost")

        self._number("corridor", "spacing", low=0.0)
        self._number("corridor", "query_k", low=0, integer=True)
        self._number("synthesis", "n_jobs", low=0, integer=True)
        self.synthesis_config()
        self._number("oracle", "grid", low=0.0)
        self._number("oracle", "tol", low=0.0)
        logger.debug("Run configuration validated")
        return self

    # -- builders -----------------------------------------------------------

    def build_model(self):
        model = dict(self.values["model"])
        return build_model(model.pop("name"), **model)

    def net_config(self):
        network = dict(self.values["network"])
        try:
            cfg = NetConfig.from_dict(network)
        except TypeError as e:
            raise ConfigurationError(str(e), field="network.rprop")
        return cfg.validate()

    def training_settings(self):
        warmup, filters, training = self.values["warmup"], self.values["filters"], self.values["training"]
        return TrainingSettings(
            epsilon=float(training["epsilon"]),
            query_count=int(training["query_count"]),
            segments=int(warmup["segments"]),
            d1_samples=int(warmup["d1_samples"]),
            d1_max_duration=float(warmup["d1_max_duration"]),
            d1_lambda=float(warmup["d1_lambda"]),
            pair_times=int(warmup["pair_times"]),
            d2_samples=int(warmup["d2_samples"]),
            d2_max_duration=float(warmup["d2_max_duration"]),
            suboptimal_fraction=float(warmup["suboptimal_fraction"]),
            cone_margin=float(filters["cone_margin"]),
            lambda_cost=float(filters["lambda_cost"]),
            neighbourhood=float(filters["neighbourhood"]),
            length_filter_enabled=bool(filters["length_filter_enabled"]),
            plant_epochs=int(training["plant_epochs"]),
            warmup_epochs=int(training["warmup_epochs"]),
            retrain_epochs=int(training["retrain_epochs"]),
            max_iterations=int(training["max_iterations"]),
            stop_fraction=float(training["stop_fraction"]),
            stop_streak=int(training["stop_streak"]),
            dt=float(training["dt"]),
        )

    def schedule(self):
        return FilterSchedule(**self.values["schedule"])

    def synthesis_config(self):
        values = {k: v for k, v in self.values["synthesis"].items() if k != "n_jobs"}
        return SynthesisConfig(**values).validate()

    @property
    def cost_fn(self):
        return COST_FUNCTIONS[self.values["training"]["running_cost"]]

    @property
    def turn_radius(self):
        model = self.values["model"]
        return float(model["speed"]) / float(model["max_turn"])

    def path(self, name):
        """Location of a run artifact inside the output directory."""
        return os.path.join(self.values["output_dir"], Config.FILES[name])

    def for_start(self, state):
        """
        Run configuration that trains around ``state``.

        The copy has ``x_bar`` set to ``state`` and writes its artifacts to a
        sub-directory of the output directory named by ``start_label``.
        """
        values = self.to_dict()
        values["x_bar"] = [float(v) for v in state]
        values["output_dir"] = os.path.join(self.values["output_dir"], start_label(state))
        return RunConfig(values)

    def corridor_for(self, state):
        """Corridor trained around ``state`` when one exists, the run's own corridor otherwise."""
        own = self.for_start(state).path("corridor")
        return own if os.path.exists(own) else self.path("corridor")


def start_label(state):
    """Directory name of a per-start run, e.g. ``xbar_-12_5_2``."""
    return "xbar_" + "_".join(f"{float(v):g}" for v in state)
