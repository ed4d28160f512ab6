"""
Command-line interface: warm-up, training, corridor, synthesis, evaluation,
oracle queries and plots.
"""
import functools
import logging
import os
import sys

import click

from config import RunConfig
from data_pipeline.flows import (
    CorridorPipeline,
    EvaluationPipeline,
    SynthesisPipeline,
    TrainingPipeline,
    WarmupPipeline,
    pipeline,
)
from services.corridor import load_corridor
from services.oracle import brute_force_time, path_table
from services.plotting import plot_corridor, plot_trajectory
from services.reporting import REFERENCE_STATES, conservatism_check
from utils.errors import ArgumentError, ConfigurationError, TrainingLoopError
from utils.helpers import configure_logging, ensure_directory
from utils.io import read_trajectory_csv

logger = logging.getLogger(__name__)

EXIT_USAGE = 2
EXIT_RUNTIME = 3


class StateType(click.ParamType):
    """A state written as comma-separated numbers, e.g. ``-10,0,0``."""
    name = "state"

    def convert(self, value, param, ctx):
        if isinstance(value, (list, tuple)):
            return [float(v) for v in value]
        try:
            return [float(v) for v in str(value).split(",")]
        except ValueError:
            self.fail(f"expected comma-separated numbers, got '{value}'", param, ctx)


STATE = StateType()


def handle_errors(func):
    """Map library errors to exit codes: 2 for bad input, 3 for failed runs."""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except (ConfigurationError, ArgumentError) as e:
            click.echo(f"error: {e}", err=True)
            sys.exit(EXIT_USAGE)
        except TrainingLoopError as e:
            click.echo(f"training failed: {e}", err=True)
            sys.exit(EXIT_RUNTIME)
        except (ValueError, RuntimeError) as e:
            click.echo(f"error: {e}", err=True)
            sys.exit(EXIT_RUNTIME)
    return wrapper


def _states_or(states, default):
    return [list(s) for s in states] if states else [list(s) for s in default]


START_HELP = "Desired state; the run goes to its own sub-directory of output_dir."


def _for_start(rc, start):
    return rc if start is None else rc.for_start(start)


@click.group()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
              help="JSON run configuration merged over the defaults.")
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
              help="Override one setting, e.g. --set training.max_iterations=50.")
@click.option("--verbose", is_flag=True, help="Log at DEBUG level.")
@click.pass_context
@handle_errors
def cli(ctx, config_path, overrides, verbose):
    """Corridor value-function approximation and controller synthesis."""
    configure_logging(verbose)
    ctx.obj = RunConfig.from_file(config_path, overrides).validate()


@cli.command()
@click.option("--d1-count", type=click.IntRange(min=1), default=None, help="Rows of D1.")
@click.option("--d2-count", type=click.IntRange(min=1), default=None, help="Rows of D2.")
@click.option("--start", type=STATE, default=None, help=START_HELP)
@click.pass_obj
@handle_errors
def warmup(rc, d1_count, d2_count, start):
    """Generate and write the warm-up datasets."""
    rc = _for_start(rc, start)
    if d1_count is not None:
        rc.set(f"warmup.d1_samples={d1_count}")
    if d2_count is not None:
        rc.set(f"warmup.d2_samples={d2_count}")
    result = WarmupPipeline(rc).run()
    click.echo(f"D1: {result['d1_rows']} rows -> {result['d1_path']}")
    click.echo(f"D2: {result['d2_rows']} rows -> {result['d2_path']}")


@cli.command()
@click.option("--resume", is_flag=True, help="Continue from the last snapshot.")
@click.option("--start", type=STATE, default=None, help=START_HELP)
@click.pass_obj
@handle_errors
def train(rc, resume, start):
    """Run the dynamic training loop."""
    rc = _for_start(rc, start)
    result = TrainingPipeline(rc, resume=resume).run()
    click.echo(f"{result['samples']} samples -> {result['samples_path']}")
    click.echo(f"weights -> {result['weights_path']}")


@cli.command()
@click.option("--dataset", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Sample CSV (defaults to the training output).")
@click.option("--start", type=STATE, default=None, help=START_HELP)
@click.pass_obj
@handle_errors
def corridor(rc, dataset, start):
    """Build the corridor from a sample dataset."""
    rc = _for_start(rc, start)
    result = CorridorPipeline(rc, dataset).run()
    click.echo(f"{result['points']} corridor points -> {result['corridor_path']}")


@cli.command()
@click.option("--corridor", "corridor_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--start", "starts", type=STATE, multiple=True, help="Start state (repeatable).")
@click.pass_obj
@handle_errors
def synthesize(rc, corridor_path, starts):
    """Closed-loop rollouts from each start state (x_bar by default)."""
    starts = _states_or(starts, [rc["x_bar"]])
    result = SynthesisPipeline(rc, starts, corridor_path).run()
    for row in result["rollouts"]:
        ratio = "n/a" if row["ratio"] is None else f"{row['ratio']:.3f}"
        click.echo(f"{row['state']}: {row['outcome']} in {row['elapsed']:.3f} s "
                   f"(oracle {row['oracle_time']:.3f} s, ratio {ratio})")


@cli.command()
@click.option("--corridor", "corridor_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--state", "states", type=STATE, multiple=True, help="State to evaluate (repeatable).")
@click.option("--check-conservatism", is_flag=True, help="Compare every corridor value with the oracle.")
@click.pass_obj
@handle_errors
def evaluate(rc, corridor_path, states, check_conservatism):
    """Corridor value against the oracle at the reference states."""
    states = _states_or(states, REFERENCE_STATES)
    result = EvaluationPipeline(rc, states, corridor_path).run()
    click.echo(result["table"].to_string(index=False, float_format=lambda v: f"{v:.2f}"))
    if check_conservatism:
        for path in result["corridor_paths"]:
            check = conservatism_check(load_corridor(path), rc.turn_radius)
            click.echo(f"{path}: conservative at {check['points'] - check['violations']} of {check['points']} "
                       f"points (worst gap {check['worst_gap']:.3g} s)")


@cli.command()
@click.option("--start", type=STATE, multiple=True, help="Start state; repeatable (reference states by default).")
@click.option("--goal", type=STATE, default=None, help="Goal state (x_target by default).")
@click.option("--brute", is_flag=True, help="Also run the brute-force search.")
@click.option("--pure-grid", is_flag=True, help="Brute force on the duration grid only, without Newton polishing.")
@click.option("--tol", type=float, default=None)
@click.option("--grid", type=float, default=None)
@click.pass_obj
@handle_errors
def oracle(rc, start, goal, brute, pure_grid, tol, grid):
    """Exact minimum times from one or more states."""
    goal = goal or rc["x_target"]
    tol = rc["oracle"]["tol"] if tol is None else tol
    grid = rc["oracle"]["grid"] if grid is None else grid
    for row in path_table(_states_or(start, REFERENCE_STATES), goal, rc.turn_radius, rc["model"]["speed"]):
        durations = ", ".join(f"{d:.4f}" for d in row["segments"])
        state = ",".join(f"{v:g}" for v in row["state"])
        click.echo(f"{state}: time {row['time']:.4f} s via {row['word']} ({durations})")
        if brute:
            found = brute_force_time(row["state"], goal, tol, grid, turn_radius=rc.turn_radius,
                                     speed=rc["model"]["speed"], polish=not pure_grid)
            mode = "pure grid" if pure_grid else "brute force"
            click.echo(f"{state}: {mode} {found:.4f} s (grid {grid:g}, tol {tol:g})")


@cli.command()
@click.option("--corridor", "corridor_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--trajectory", "trajectory_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None, help="SVG file to write.")
@click.option("--heading", type=float, default=0.0, help="Heading of the oracle contour slice.")
@click.pass_obj
@handle_errors
def plot(rc, corridor_path, trajectory_path, out_path, heading):
    """SVG view of a corridor or a rollout trajectory."""
    if trajectory_path is None and corridor_path is None and not os.path.exists(rc.path("corridor")):
        raise ArgumentError("nothing to plot: pass --corridor or --trajectory")
    folder = ensure_directory(rc.path("plots"))
    if trajectory_path:
        trajectory, _ = read_trajectory_csv(trajectory_path)
        background = load_corridor(corridor_path) if corridor_path else None
        out_path = out_path or os.path.join(folder, os.path.splitext(os.path.basename(trajectory_path))[0] + ".svg")
        plot_trajectory(trajectory, out_path, rc["x_target"], background)
    else:
        c = load_corridor(corridor_path or rc.path("corridor"))
        out_path = out_path or os.path.join(folder, "corridor.svg")
        plot_corridor(c, out_path, heading, turn_radius=rc.turn_radius)
    click.echo(f"plot -> {out_path}")


@cli.command(name="pipeline")
@click.option("--state", "states", type=STATE, multiple=True, help="Rollout/evaluation state (repeatable).")
@click.pass_obj
@handle_errors
def run_pipeline(rc, states):
    """Warm-up, training, corridor, rollouts and evaluation in one flow."""
    states = _states_or(states, REFERENCE_STATES)
    result = pipeline(rc, states)
    click.echo(result["evaluation"]["table"].to_string(index=False, float_format=lambda v: f"{v:.2f}"))


if __name__ == "__main__":
    cli()
