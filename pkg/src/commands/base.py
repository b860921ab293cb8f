"""
Base utilities for CLI commands.
Contains the shared context object and the helper that calls a command body,
logs it and maps failures to exit codes.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

import click
import typer
from pydantic import ValidationError

from src.config import SchedulerSettings, get_settings
from src.scheduling_interface import ConfigError, SchedulerError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


@dataclass
class CommandContext:
    """Global flags shared by every subcommand (stored on the click context)."""

    seed: Optional[int] = None
    out_dir: Path = Path("out")
    jobs: int = 1
    settings: SchedulerSettings = field(default_factory=get_settings)


def command_context(ctx: typer.Context) -> CommandContext:
    if ctx.obj is None:
        ctx.obj = CommandContext()
    return ctx.obj


def emit(text: str) -> None:
    """Writes command output to stdout; logs go to stderr."""
    typer.echo(text)


def run_command(command_name: str, action: Callable[..., Any], **params) -> Any:
    """
    Helper function shared by all commands.

    Args:
        command_name: Name of the command for logging
        action: Callable doing the work
        **params: Keyword arguments passed to `action`

    Returns:
        Whatever `action` returns.

    Raises:
        typer.Exit: With code 1 for configuration or usage errors, 2 for runtime failures.
    """
    logger.info(f"Command '{command_name}' called with {params}")
    try:
        result = action(**params)
        logger.info(f"Command '{command_name}' finished.")
        return result
    except ConfigError as e:
        logger.warning(f"ConfigError in '{command_name}': {e}")
        typer.echo(f"Error: {e}", err=True)
        raise typer.Exit(code=EXIT_USAGE)
    except ValidationError as e:
        logger.warning(f"Invalid input for '{command_name}': {e}")
        typer.echo(f"Error: Invalid input parameter. {e}", err=True)
        raise typer.Exit(code=EXIT_USAGE)
    except click.ClickException:
        raise
    except SchedulerError as e:
        logger.error(f"{type(e).__name__} in '{command_name}': {e}")
        typer.echo(f"Error: {e}", err=True)
        raise typer.Exit(code=EXIT_RUNTIME)
    except Exception as e:
        logger.exception(f"Unexpected Exception processing {command_name}: {e}")
        typer.echo(f"Error: An unexpected error occurred: {e}", err=True)
        raise typer.Exit(code=EXIT_RUNTIME)
