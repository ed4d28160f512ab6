import json

import pytest

from config import Config, RunConfig, parse_value
from dynamics.system import effort_cost, unit_cost
from utils.errors import ConfigurationError


class TestParseValue:
    def test_json_values(self):
        assert parse_value("5") == 5
        assert parse_value("[-5, 0, 0]") == [-5, 0, 0]
        assert parse_value("true") is True

    def test_plain_strings(self):
        assert parse_value("runs/seed3") == "runs/seed3"


class TestRunConfig:
    def test_defaults_validate(self):
        rc = RunConfig().validate()
        assert rc["x_bar"] == Config.X_BAR
        assert rc.turn_radius == 1.0
        assert rc.cost_fn is unit_cost

    def test_overrides(self):
        rc = RunConfig.from_dict({"training": {"max_iterations": 5}},
                                 ["seed=3", "output_dir=runs/seed3", "training.running_cost=effort"])
        assert rc["training"]["max_iterations"] == 5
        assert rc["training"]["epsilon"] == Config.TRAINING["epsilon"]
        assert rc["seed"] == 3
        assert rc.cost_fn is effort_cost
        assert rc.path("corridor").startswith("runs/seed3")

    def test_defaults_are_not_shared(self):
        RunConfig().set("training.max_iterations=1")
        assert RunConfig()["training"]["max_iterations"] == Config.TRAINING["max_iterations"]

    def test_unknown_key(self):
        with pytest.raises(ConfigurationError) as err:
            RunConfig.from_dict(overrides=["training.iterations=5"])
        assert err.value.field == "training.iterations"

    def test_missing_assignment(self):
        with pytest.raises(ConfigurationError) as err:
            RunConfig().set("seed")
        assert err.value.field == "--set"

    def test_optimizer_settings_merge_partially(self):
        rc = RunConfig.from_dict(overrides=['network.rprop={"eta_plus": 1.3}'])
        assert rc.net_config().rprop.eta_plus == 1.3
        assert rc.net_config().rprop.eta_minus == Config.NETWORK["rprop"]["eta_minus"]
        with pytest.raises(ConfigurationError) as err:
            RunConfig.from_dict(overrides=['network.rprop={"eta": 1.3}'])
        assert err.value.field == "network.rprop"

    @pytest.mark.parametrize("assignment,field", [
        ("x_bar=[1, 2]", "x_bar"),
        ("model.name=unicycle", "model.name"),
        ("model.speed=0", "model.speed"),
        ("warmup.segments=1.5", "warmup.segments"),
        ("warmup.suboptimal_fraction=2", "warmup.suboptimal_fraction"),
        ("schedule.guide_until=10", "schedule.guide_until"),
        ("training.running_cost=fuel", "training.running_cost"),
        ("training.dt=-1", "training.dt"),
        ("synthesis.dt=0.5", "synthesis.dt"),
        ("corridor.spacing=0", "corridor.spacing"),
        ("oracle.tol=\"wide\"", "oracle.tol"),
        ("filters.length_filter_enabled=1", "filters.length_filter_enabled"),
    ])
    def test_validation_names_the_field(self, assignment, field):
        with pytest.raises(ConfigurationError) as err:
            RunConfig.from_dict(overrides=[assignment]).validate()
        assert err.value.field == field

    def test_from_file(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"x_bar": [-5.0, 1.0, 0.0], "corridor": {"spacing": 0.2}}))
        rc = RunConfig.from_file(str(path), ["corridor.query_k=2"]).validate()
        assert rc["x_bar"] == [-5.0, 1.0, 0.0]
        assert rc["corridor"] == {"spacing": 0.2, "query_k": 2}

    def test_unreadable_file(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text("{not json")
        with pytest.raises(ConfigurationError) as err:
            RunConfig.from_file(str(path))
        assert err.value.field == "config"

    def test_builders(self):
        rc = RunConfig.from_dict(overrides=["warmup.d2_samples=12", "synthesis.cylinder_r=0.25"])
        assert rc.training_settings().d2_samples == 12
        assert rc.synthesis_config().cylinder_r == 0.25
        assert rc.schedule().explore_until == Config.SCHEDULE["explore_until"]
        assert rc.build_model().dimension == 3
