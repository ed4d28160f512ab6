"""
Run stages as pipelines, and the prefect flow that chains them:
warm-up data, dynamic training, corridor, closed-loop rollouts, evaluation.
"""
import logging
import os
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd
from prefect import flow, task

from data_pipeline.base import Pipeline
from data_pipeline.dynamic_training import load_snapshot, run_training
from data_pipeline.regions import WholeSpace, min_cone
from data_pipeline.samples import certify_samples
from data_pipeline.warmup import gen_query_set, gen_warmup, inject_suboptimal
from ml_layer.models.inverse_dynamics import InverseDynamicsNetwork
from services.corridor import build_corridor, load_corridor, save_corridor
from services.reporting import evaluation_table, rollout_rows, write_report
from services.synthesis import rollout_many
from utils.errors import ArgumentError
from utils.helpers import ensure_directory, make_rng, split_streams
from utils.io import read_samples_csv, write_rollout_summary, write_samples_csv, write_trajectory_csv

logger = logging.getLogger(__name__)


def read_samples(run_config, path: str):
    """Read a sample CSV and re-certify every row."""
    model = run_config.build_model()
    states, sequences, _ = read_samples_csv(path, model.state_labels)
    if not sequences:
        raise ArgumentError(f"{path} holds no samples")
    return certify_samples(model, states, sequences, run_config["x_target"],
                           run_config["training"]["dt"], run_config.cost_fn)


class WarmupPipeline(Pipeline):
    """Generates the plant-layer dataset D1 and the warm-up dataset D2."""

    def __init__(self, run_config) -> None:
        super().__init__(run_config, name="warmup", description="warm-up data generation")

    def extract(self, *args, **kwargs) -> Dict[str, Any]:
        rc = self.run_config
        model = rc.build_model()
        settings = rc.training_settings()
        rng, _ = split_streams(make_rng(rc["seed"]))
        # data stream of the training warm start, same draw order
        query_set = gen_query_set(rc["x_bar"], settings.epsilon, settings.query_count, rng, model.metric)
        return {"model": model, "settings": settings, "rng": rng, "query_set": query_set}

    def records(self, data):
        return len(data["query_set"])

    def transform(self, data: Dict[str, Any], *args, **kwargs) -> Dict[str, List]:
        rc = self.run_config
        model, settings, rng = data["model"], data["settings"], data["rng"]
        codebook = rc.net_config().primitive_codebook
        cone = min_cone(rc["x_target"], data["query_set"], settings.cone_margin, model.position_dims)
        d1 = gen_warmup(model, WholeSpace(), settings.d1_lambda, settings.d1_samples,
                        settings.d1_max_duration, codebook, rng, rc["x_target"], settings.segments,
                        settings.dt, rc.cost_fn)
        d2 = gen_warmup(model, cone, rc["schedule"]["lambda_cone"], settings.d2_samples,
                        settings.d2_max_duration, codebook, rng, rc["x_target"], settings.segments,
                        settings.dt, rc.cost_fn)
        d2 = inject_suboptimal(model, d2, settings.suboptimal_fraction, rng, rc["x_target"],
                               settings.dt, rc.cost_fn)
        return {"d1": d1, "d2": d2}

    def load(self, data: Dict[str, List], *args, **kwargs) -> Dict[str, Any]:
        rc = self.run_config
        ensure_directory(rc["output_dir"])
        labels = rc.build_model().state_labels
        write_samples_csv(data["d1"], labels, rc.path("d1"))
        write_samples_csv(data["d2"], labels, rc.path("d2"))
        return {"d1_rows": len(data["d1"]), "d2_rows": len(data["d2"]),
                "d1_path": rc.path("d1"), "d2_path": rc.path("d2")}


class TrainingPipeline(Pipeline):
    """Runs the dynamic training loop and writes weights, samples and the iteration log."""

    def __init__(self, run_config, resume: bool = False) -> None:
        super().__init__(run_config, name="training", description="dynamic training loop")
        self.resume = resume

    def extract(self, *args, **kwargs) -> Dict[str, Any]:
        rc = self.run_config
        data = {"d1": None, "d2": None, "resume": None}
        if self.resume:
            if not os.path.exists(rc.path("snapshot")):
                raise ArgumentError(f"no snapshot to resume from at {rc.path('snapshot')}")
            data["resume"] = load_snapshot(rc.path("snapshot"))
        elif os.path.exists(rc.path("d1")) and os.path.exists(rc.path("d2")):
            data["d1"] = read_samples(rc, rc.path("d1"))
            data["d2"] = read_samples(rc, rc.path("d2"))
            logger.info(f"Using warm-up datasets from {rc['output_dir']}")
        return data

    def records(self, data):
        if data["resume"] is not None:
            return len(data["resume"].train_set)
        return sum(len(data[key]) for key in ("d1", "d2") if data[key] is not None)

    def transform(self, data: Dict[str, Any], *args, **kwargs):
        rc = self.run_config
        ensure_directory(rc["output_dir"])
        weights, train_set = run_training(
            rc.build_model(), rc.net_config(), rc["x_bar"], rc["x_target"], rc.schedule(),
            make_rng(rc["seed"]), rc.training_settings(), resume=data["resume"],
            snapshot_path=rc.path("snapshot"), log_path=rc.path("log"), cost_fn=rc.cost_fn,
            d1=data["d1"], d2=data["d2"])
        return weights, train_set

    def load(self, data, *args, **kwargs) -> Dict[str, Any]:
        rc = self.run_config
        weights, train_set = data
        network = InverseDynamicsNetwork(rc.net_config(), weights, model_path=rc.path("weights"))
        network.save()
        write_samples_csv(train_set, rc.build_model().state_labels, rc.path("samples"))
        return {"samples": len(train_set), "weights_path": rc.path("weights"),
                "samples_path": rc.path("samples")}


class CorridorPipeline(Pipeline):
    """Turns a certified sample dataset into a corridor file."""

    def __init__(self, run_config, dataset: Optional[str] = None) -> None:
        super().__init__(run_config, name="corridor", description="corridor construction")
        self.dataset = dataset or run_config.path("samples")

    def extract(self, *args, **kwargs):
        return read_samples(self.run_config, self.dataset)

    def transform(self, data, *args, **kwargs):
        rc = self.run_config
        corridor = build_corridor(data, rc.build_model(), rc["corridor"]["spacing"],
                                  rc["training"]["dt"], rc["x_target"], rc.cost_fn)
        corridor.build_info["dataset"] = os.path.basename(self.dataset)
        return corridor

    def load(self, data, *args, **kwargs) -> Dict[str, Any]:
        rc = self.run_config
        ensure_directory(rc["output_dir"])
        save_corridor(data, rc.path("corridor"), rc.build_model().state_labels)
        return {"points": len(data), "corridor_path": rc.path("corridor")}


def _corridors_for(run_config, states: List, corridor_path: Optional[str]):
    """Corridor file per state, each loaded once: ``corridor_path`` for all, else the state's own."""
    paths = [corridor_path or run_config.corridor_for(s) for s in states]
    return paths, {path: load_corridor(path) for path in dict.fromkeys(paths)}


class SynthesisPipeline(Pipeline):
    """
    Closed-loop rollouts from a list of start states.

    Without an explicit corridor, each start uses the corridor trained
    around it (``RunConfig.corridor_for``).
    """

    def __init__(self, run_config, starts: Sequence, corridor_path: Optional[str] = None) -> None:
        super().__init__(run_config, name="synthesis", description="closed-loop rollouts")
        self.starts = [list(map(float, s)) for s in starts]
        self.corridor_path = corridor_path

    def extract(self, *args, **kwargs):
        return _corridors_for(self.run_config, self.starts, self.corridor_path)

    def records(self, data):
        return len(self.starts)

    def transform(self, data, *args, **kwargs):
        rc = self.run_config
        paths, corridors = data
        model = rc.build_model()
        results = [None] * len(self.starts)
        for path, c in corridors.items():
            picked = [k for k, p in enumerate(paths) if p == path]
            logger.debug(f"{len(picked)} rollouts on {path}")
            done = rollout_many(c, model, [self.starts[k] for k in picked], rc.synthesis_config(),
                                n_jobs=int(rc["synthesis"]["n_jobs"]))
            for k, result in zip(picked, done):
                results[k] = result
        return results

    def load(self, data, *args, **kwargs) -> Dict[str, Any]:
        rc = self.run_config
        folder = ensure_directory(rc.path("rollouts"))
        labels = rc.build_model().state_labels
        table = rollout_rows(self.starts, data, rc.turn_radius, rc["x_target"])
        summaries = []
        for k, (start, result) in enumerate(zip(self.starts, data)):
            write_trajectory_csv(result.trajectory, labels, os.path.join(folder, f"rollout_{k:03d}.csv"))
            summary = write_rollout_summary(os.path.join(folder, f"rollout_{k:03d}.json"),
                                            result.outcome, result.elapsed, table.loc[k, "oracle_time"])
            summaries.append({"state": start, **summary})
        table.to_csv(os.path.join(folder, "summary.csv"), index=False, float_format="%.6g")
        return {"rollouts": summaries, "rollouts_dir": folder, "table": table}


class EvaluationPipeline(Pipeline):
    """Corridor values against the oracle, each state on its own corridor when one exists."""

    def __init__(self, run_config, states: Sequence, corridor_path: Optional[str] = None) -> None:
        super().__init__(run_config, name="evaluation", description="oracle comparison")
        self.states = [list(map(float, s)) for s in states]
        self.corridor_path = corridor_path
        self.corridor_paths: List[str] = []

    def extract(self, *args, **kwargs):
        paths, corridors = _corridors_for(self.run_config, self.states, self.corridor_path)
        self.corridor_paths = list(corridors)
        return paths, corridors

    def records(self, data):
        return len(self.states)

    def transform(self, data, *args, **kwargs):
        rc = self.run_config
        paths, corridors = data
        k = int(rc["corridor"]["query_k"])
        return pd.concat([evaluation_table(corridors[path], [state], rc.turn_radius, k)
                          for state, path in zip(self.states, paths)], ignore_index=True)

    def load(self, data, *args, **kwargs) -> Dict[str, Any]:
        rc = self.run_config
        ensure_directory(rc["output_dir"])
        write_report(data, rc.path("report"))
        return {"table": data, "report_path": rc.path("report"), "corridor_paths": self.corridor_paths}


def _run_for_start(run_config, state) -> Dict[str, Any]:
    """Warm-up, training, corridor, rollout and evaluation for one desired state."""
    rc = run_config.for_start(state)

    @task(name="generate_warmup")
    def warmup_task():
        return WarmupPipeline(rc).run()

    @task(name="train_network")
    def train_task(_):
        return TrainingPipeline(rc).run()

    @task(name="build_corridor")
    def corridor_task(_):
        return CorridorPipeline(rc).run()

    @task(name="synthesize_controls")
    def synthesis_task(built):
        return SynthesisPipeline(rc, [state], built["corridor_path"]).run()

    @task(name="evaluate_corridor")
    def evaluation_task(built):
        return EvaluationPipeline(rc, [state], built["corridor_path"]).run()

    logger.info(f"Run for x_bar = {state} in {rc['output_dir']}")
    warmup = warmup_task()
    training = train_task(warmup)
    corridor = corridor_task(training)
    return {"state": list(state), "output_dir": rc["output_dir"], "warmup": warmup,
            "training": training, "corridor": corridor, "rollouts": synthesis_task(corridor),
            "evaluation": evaluation_task(corridor)}


@flow(name="corridor_planner_flow")
def pipeline(run_config, states: Sequence) -> Dict[str, Any]:
    """
    Full run, once per desired state: each state gets its own warm-up data,
    training run and corridor under ``output_dir/<start_label>``, and is then
    rolled out and evaluated on that corridor.

    Args:
        run_config: Validated RunConfig
        states: Desired states, used as x_bar and as rollout starts

    Returns:
        Dictionary with the per-state stage results under ``runs`` and the
        combined ``evaluation`` and ``rollouts`` tables, also written to
        ``report.csv`` and ``rollouts/summary.csv`` in the output directory
    """
    runs = [_run_for_start(run_config, [float(v) for v in state]) for state in states]

    ensure_directory(run_config["output_dir"])
    report = pd.concat([run["evaluation"]["table"] for run in runs], ignore_index=True)
    write_report(report, run_config.path("report"))
    summary = pd.concat([run["rollouts"]["table"] for run in runs], ignore_index=True)
    summary_path = os.path.join(ensure_directory(run_config.path("rollouts")), "summary.csv")
    summary.to_csv(summary_path, index=False, float_format="%.6g")
    return {"runs": runs,
            "evaluation": {"table": report, "report_path": run_config.path("report")},
            "rollouts": {"table": summary, "summary_path": summary_path}}
