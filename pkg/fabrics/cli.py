"""
Command-line surface of the fabrics engine.

``run`` executes an experiment config and writes its run directory, ``plot`` renders
SVG figures of a finished run and ``verify`` runs one property suite. Exit status is
0 on success, 1 for barrier violations, failed properties or unexpected errors and 2
for bad configs or missing run files.
"""

import functools
import json
import logging
import os
import sys
from typing import Callable, Optional, Tuple

import click
import pandas as pd

from config import Config

from . import __version__
from .analysis import summarize
from .config_schema import load_config
from .exceptions import ConfigError, ParameterError
from .experiments import experiment_names
from .export import write_run
from .plotting import STYLES, plot_run
from .sim import run_experiment
from .verify import SUITES, run_suite

EXIT_FAILURE = 1
EXIT_USAGE = 2


def _exit_on_errors(command: Callable) -> Callable:
    """Maps engine exceptions onto exit statuses."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except (ConfigError, ParameterError) as e:
            logging.warning(f"Rejected input: {e}")
            click.echo(f"Error: {e}", err=True)
            sys.exit(EXIT_USAGE)
        except FileNotFoundError as e:
            logging.warning(f"Missing file: {e}")
            click.echo(f"Error: {e}", err=True)
            sys.exit(EXIT_USAGE)
        except Exception as e:  # pylint: disable=broad-except
            logging.error(
                f"Unexpected error in '{command.__name__}': {e}", exc_info=True
            )
            click.echo(f"Error: {e}", err=True)
            sys.exit(EXIT_FAILURE)

    return wrapper


@click.group()
@click.version_option(version=__version__)
def main() -> None:
    """Optimization fabrics: run experiments, plot runs and verify properties."""


@main.command()
@click.argument("config_path", type=click.Path(dir_okay=False))
@click.option("-o", "--out", "out_dir", type=click.Path(file_okay=False), default=None,
              help="Run directory (default: <FABRIC_OUTPUT_DIR>/<experiment name>)")
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
              help="Override a config value, e.g. integration.dt=0.02 (repeatable)")
@click.option("--seed", type=int, default=None, help="Override experiment.seed")
@click.option("--threads", type=int, default=None,
              help="Worker threads (capped by FABRIC_THREADS)")
@_exit_on_errors
def run(
    config_path: str,
    out_dir: Optional[str],
    overrides: Tuple[str, ...],
    seed: Optional[int],
    threads: Optional[int],
) -> None:
    """Runs the experiment in CONFIG_PATH and writes trajectories and a manifest."""
    overrides = list(overrides)
    if seed is not None:
        overrides.append(f"experiment.seed={seed}")
    config = load_config(config_path, overrides)
    out_dir = out_dir or os.path.join(Config.OUTPUT_DIR, config.name)
    logging.info(f"Running '{config.name}' from {config_path} into {out_dir}")

    experiment_run = run_experiment(config, threads)
    summary = summarize(experiment_run)
    manifest = write_run(experiment_run, out_dir, summary)
    click.echo(f"Wrote {len(experiment_run.records)} rollouts and {manifest}")
    click.echo(json.dumps(summary["events"], sort_keys=True))

    style = config.output.get("plot_style")
    if style:
        click.echo(f"Wrote {plot_run(out_dir, style)}")

    if experiment_run.violations:
        click.echo(
            f"{experiment_run.violations} rollout(s) ended in a barrier violation",
            err=True,
        )
        sys.exit(EXIT_FAILURE)


@main.command()
@click.argument("run_dir", type=click.Path(file_okay=False))
@click.option("--style", type=click.Choice(STYLES), default="paths", show_default=True,
              help="Figure style")
@_exit_on_errors
def plot(run_dir: str, style: str) -> None:
    """Renders a figure of the finished run in RUN_DIR."""
    click.echo(f"Wrote {plot_run(run_dir, style)}")


@main.command()
@click.option("--suite", type=click.Choice(SUITES), required=True,
              help="Property suite")
@click.option("--seed", type=int, default=None, help="Seed of the sampled states")
@_exit_on_errors
def verify(suite: str, seed: Optional[int]) -> None:
    """Runs a property suite and prints its pass/fail table."""
    table = run_suite(suite, seed)
    with pd.option_context("display.width", 160, "display.max_colwidth", 60):
        columns = ["property", "passed", "max_deviation", "tolerance"]
        click.echo(table[columns].to_string(index=False))
    failed = table[~table["passed"]]
    if not failed.empty:
        for _, row in failed.iterrows():
            click.echo(
                f"FAILED {row['property']}: deviation {row['max_deviation']:.3e} "
                f"> {row['tolerance']:.1e} at {row['state']}",
                err=True,
            )
        sys.exit(EXIT_FAILURE)


@main.command(name="list")
def list_experiments() -> None:
    """Lists the registered experiments."""
    for name in experiment_names():
        click.echo(name)
