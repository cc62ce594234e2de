"""
dscca CLI - train, evaluate and compare dynamically-scaled CCA models.
"""

import logging
import sys
from functools import wraps
from pathlib import Path
from typing import Optional

import click
from dotenv import load_dotenv
from rich.console import Console
from rich.table import Table

from dscca.cli.logs import LogHandler
from dscca.cli.runner import (
    ablate,
    build_dataset,
    evaluate_model,
    load_grid,
    read_matrix,
    retrieve,
    run_seeds,
    sweep,
    write_report,
    write_retrieval_csv,
)
from dscca.config.constants import ExitCodes
from dscca.config.experiment_config import ExperimentConfig
from dscca.config.loader import dumps_config, load_config
from dscca.persistence.checkpoint import load_checkpoint
from dscca.utils.exception_handler import (
    CheckpointError,
    ConfigValidationError,
    DataFormatError,
    NumericalError,
    ShapeError,
)

load_dotenv()

console = Console()


def configure_logging(experiment: str, debug: bool, live: bool = True):
    logger = logging.getLogger("dscca")
    logger.handlers = []

    handler = LogHandler(experiment, console=console) if live else logging.StreamHandler(sys.stderr)
    handler.setFormatter(
        logging.Formatter("%(levelname)s %(name)s %(message)s", "%H:%M:%S")
        if debug
        else logging.Formatter("%(message)s", "%H:%M:%S")
    )
    logger.addHandler(handler)
    logger.setLevel(logging.DEBUG if debug else logging.INFO)
    logger.propagate = False

    if debug:
        telemetry_logger = logging.getLogger("dscca-telemetry")
        telemetry_logger.handlers = [handler]
        telemetry_logger.propagate = False
        telemetry_logger.setLevel(logging.DEBUG)

    return handler


def exit_codes(f):
    """Map dscca failures onto the documented process exit codes"""

    @wraps(f)
    def wrapper(*args, **kwargs):
        try:
            code = f(*args, **kwargs)
        except (ConfigValidationError, DataFormatError, CheckpointError, ShapeError) as e:
            console.print(f"[bold red]Error:[/] {e}")
            sys.exit(ExitCodes.CONFIG_ERROR)
        except NumericalError as e:
            console.print(f"[bold red]Numerical abort:[/] {e}")
            sys.exit(ExitCodes.NUMERICAL_ABORT)
        sys.exit(code or ExitCodes.SUCCESS)

    return wrapper


def _live(debug: bool) -> bool:
    return console.is_terminal and not debug


def _config_from_checkpoint(model) -> ExperimentConfig:
    return ExperimentConfig.from_dict(model.config)


@click.group()
def cli():
    """Dynamically-scaled deep CCA experiments."""
    pass


@cli.command()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), required=True, help="Experiment config (TOML, YAML or JSON)")
@click.option("--seeds", help="Comma-separated seeds overriding training.seed", default=None)
@click.option("--output-root", help="Directory for run artifacts (default $DSCCA_OUTPUT_ROOT or system.output_root)", default=None)
@click.option("--debug", is_flag=True, help="Enable verbose debug logging", default=False)
@exit_codes
def train(config_path: str, seeds: Optional[str], output_root: Optional[str], debug: bool):
    """Train a model and write checkpoint, metric log and report."""
    config = load_config(config_path)
    seed_list = [int(s) for s in seeds.split(",")] if seeds else [config.training.seed]
    title = f"{config.training.mode} / {config.training.ablation} / seeds {','.join(map(str, seed_list))}"
    handler = configure_logging(title, debug or config.system.debug, live=_live(debug))
    listeners = [handler.handle_event] if isinstance(handler, LogHandler) else []

    if isinstance(handler, LogHandler):
        with handler.render():
            results, summary = run_seeds(config, seed_list, output_root, listeners)
            failed = next((r for r in results if r.exit_code), None)
            handler.finish(failed is None, failed.error if failed else "Training finished")
    else:
        results, summary = run_seeds(config, seed_list, output_root, listeners)

    table = Table(title="Runs")
    table.add_column("Seed")
    table.add_column("Exit")
    table.add_column("Test metric")
    table.add_column("Run directory")
    for seed, result in zip(seed_list, results):
        metric = f"{result.report.test_metric():.4f}" if result.report else "-"
        table.add_row(str(seed), str(result.exit_code), metric, result.run_dir)
    console.print(table)
    if summary is not None and summary.n > 1:
        console.print(f"mean {summary.mean:.4f} ± {summary.std:.4f} (min {summary.min:.4f}, max {summary.max:.4f})")
    return max((r.exit_code for r in results), default=ExitCodes.SUCCESS)


@cli.command(name="eval")
@click.option("--checkpoint", type=click.Path(dir_okay=False), required=True, help="Checkpoint file")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None, help="Config defining the dataset (default: the checkpoint's)")
@click.option("--output", type=click.Path(dir_okay=False), default=None, help="Write the report JSON here")
@click.option("--debug", is_flag=True, help="Enable verbose debug logging", default=False)
@exit_codes
def evaluate(checkpoint: str, config_path: Optional[str], output: Optional[str], debug: bool):
    """Evaluate a checkpoint on the config's test split."""
    configure_logging("eval", debug, live=False)
    model = load_checkpoint(checkpoint)
    if not hasattr(model, "net1"):
        raise CheckpointError(f"{checkpoint}: eval needs a dcca or ranking checkpoint")
    config = load_config(config_path) if config_path else _config_from_checkpoint(model)
    config.validate(check_paths=True)
    report = evaluate_model(model, config, build_dataset(config))
    path = write_report(report, output or Path(checkpoint).with_name("eval_report.json"))
    if report.total_correlation is not None:
        tc = report.total_correlation
        console.print(f"Total correlation {tc.total:.4f} / {tc.upper_bound:.0f} (post-hoc reg {tc.posthoc_reg[0]:.0e})")
    for recall in report.recall:
        cells = ", ".join(f"R@{k} {r:.3f}" for k, r in zip(recall.k_values, recall.recalls))
        console.print(f"{recall.direction}: {cells}, median rank {recall.median_rank:.1f}")
    console.print(f"Report written to {path}")
    return ExitCodes.SUCCESS


@cli.command(name="retrieve")
@click.option("--checkpoint", type=click.Path(dir_okay=False), required=True, help="Ranking checkpoint")
@click.option("--queries", type=click.Path(dir_okay=False), required=True, help="Query view file (.csv or binary)")
@click.option("--targets", type=click.Path(dir_okay=False), required=True, help="Target view file (.csv or binary)")
@click.option("--k", "k", type=int, default=10, help="Number of targets per query")
@click.option("--direction", type=click.Choice(["1to2", "2to1"]), default="1to2", help="Query view to target view")
@click.option("--output", type=click.Path(dir_okay=False), default=None, help="CSV file for the results")
@click.option("--debug", is_flag=True, help="Enable verbose debug logging", default=False)
@exit_codes
def retrieve_command(checkpoint: str, queries: str, targets: str, k: int, direction: str, output: Optional[str], debug: bool):
    """Rank targets for every query with a trained ranking model."""
    configure_logging("retrieve", debug, live=False)
    model = load_checkpoint(checkpoint, expected_kind="ranking")
    rows = retrieve(model, read_matrix(queries), read_matrix(targets), k, direction)
    if output:
        write_retrieval_csv(rows, output)
        console.print(f"{len(rows)} rows written to {output}")
    else:
        table = Table(title=f"Top-{k} retrieval ({direction})")
        for column in ("query_id", "rank", "target_id", "score"):
            table.add_column(column)
        for row in rows:
            table.add_row(str(row["query_id"]), str(row["rank"]), str(row["target_id"]), f"{row['score']:.4f}")
        console.print(table)
    return ExitCodes.SUCCESS


@cli.command(name="sweep")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), required=True, help="Base experiment config")
@click.option("--grid", "grid_path", type=click.Path(dir_okay=False), required=True, help="Grid file mapping config paths to candidate values")
@click.option("--output-root", default=None, help="Directory for run artifacts")
@click.option("--debug", is_flag=True, help="Enable verbose debug logging", default=False)
@exit_codes
def sweep_command(config_path: str, grid_path: str, output_root: Optional[str], debug: bool):
    """Tune hyperparameters on the validation split."""
    config = load_config(config_path)
    configure_logging("sweep", debug, live=False)
    result = sweep(config, load_grid(grid_path), output_root)

    table = Table(title="Sweep")
    table.add_column("#")
    table.add_column("Overrides")
    table.add_column("Validation metric")
    for index, row in enumerate(result.rows):
        marker = " ✓" if index == result.selected else ""
        table.add_row(f"{index}{marker}", ", ".join(f"{k}={v}" for k, v in row.overrides.items()), f"{row.selection_metric:.4f}")
    console.print(table)
    console.print(f"Test metric of the selected run: {result.report.test_metric():.4f}")
    return ExitCodes.SUCCESS


@cli.command(name="ablate")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), required=True, help="Base experiment config")
@click.option("--output-root", default=None, help="Directory for run artifacts")
@click.option("--debug", is_flag=True, help="Enable verbose debug logging", default=False)
@exit_codes
def ablate_command(config_path: str, output_root: Optional[str], debug: bool):
    """Compare DCCA, the widened baselines and every DSL variant."""
    config = load_config(config_path)
    configure_logging("ablate", debug, live=False)
    rows = ablate(config, output_root)

    table = Table(title=f"Ablation (d = {config.eval.d})")
    table.add_column("Variant")
    table.add_column("Total correlation")
    table.add_column("Gap closed by full (%)")
    for row in rows:
        closed = "-" if row.gap_closed_by_full is None else f"{row.gap_closed_by_full:.0f}"
        table.add_row(row.name, f"{row.total:.4f}", closed)
    console.print(table)
    return ExitCodes.SUCCESS


@cli.command(name="show-config")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None, help="Config to normalize (default: built-in defaults)")
@exit_codes
def show_config(config_path: Optional[str]):
    """Print the normalized config as TOML."""
    config = load_config(config_path) if config_path else ExperimentConfig.create_default()
    click.echo(dumps_config(config))
    return ExitCodes.SUCCESS


if __name__ == "__main__":
    cli()
