# Main CLI entry point of the seed scheduler
import logging
import sys
from pathlib import Path
from typing import List, Optional

import click
import typer

from src.commands.base import EXIT_OK, EXIT_USAGE, CommandContext
from src.config import get_settings
from src.utils import setup_logging

# Register functions of each command group
from src.commands.generate import register_generate_commands
from src.commands.run import register_run_commands
from src.commands.experiment import register_experiment_commands
from src.commands.model import register_model_commands

logger = logging.getLogger(__name__)

# --- Typer App Initialization ---
app = typer.Typer(
    name="seed_scheduler",
    help="Learned seed scheduling for hybrid fuzzing on synthetic programs: "
         "generate benchmarks, run campaigns and experiment matrices, manage model files.",
    no_args_is_help=True,
    add_completion=False,
    pretty_exceptions_enable=False,
)


@app.callback()
def cli(
    ctx: typer.Context,
    seed: Optional[int] = typer.Option(None, "--seed", help="Root rng seed (campaigns, experiments, presets)."),
    out: Path = typer.Option(Path("out"), "--out", help="Output directory."),
    jobs: int = typer.Option(1, "--jobs", min=1, help="Campaigns run in parallel by experiments."),
    log_level: Optional[str] = typer.Option(None, "--log-level", help="DEBUG, INFO, WARNING or ERROR."),
):
    settings = get_settings()
    level = logging.getLevelName((log_level or settings.log_level).upper())
    if not isinstance(level, int):
        raise typer.BadParameter(f"Unknown log level '{log_level or settings.log_level}'", param_hint="--log-level")
    setup_logging(level)
    ctx.obj = CommandContext(seed=seed, out_dir=out, jobs=jobs, settings=settings)


# --- Register the command groups ---
register_generate_commands(app)
register_run_commands(app)
register_experiment_commands(app)
register_model_commands(app)


def main(argv: Optional[List[str]] = None) -> int:
    """
    Runs the CLI and returns its exit code: 0 ok, 1 usage or configuration
    error, 2 runtime failure.
    """
    command = typer.main.get_command(app)
    try:
        rv = command.main(args=argv, prog_name="seed_scheduler", standalone_mode=False)
    except click.ClickException as e:
        e.show()
        return EXIT_USAGE
    except click.exceptions.Abort:
        click.echo("Aborted!", err=True)
        return EXIT_USAGE
    return rv if isinstance(rv, int) else EXIT_OK


# --- Main Execution Block ---
if __name__ == "__main__":
    sys.exit(main())
