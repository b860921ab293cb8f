"""
Model file commands: inspect and validate saved utility models.
"""
import logging
from pathlib import Path

import typer

from src.commands.base import emit, run_command
from src.formatting.markdown_formatter import format_mapping_to_markdown
from src.learning.bundle import MODEL_FILE_VERSION, MODEL_FORMAT, ModelBundle, describe_bundle, load_model

logger = logging.getLogger(__name__)


def inspect_model(path: Path) -> ModelBundle:
    bundle = load_model(path)
    emit(format_mapping_to_markdown({
        "path": str(path),
        "format": MODEL_FORMAT,
        "version": MODEL_FILE_VERSION,
        **describe_bundle(bundle),
    }))
    return bundle


def validate_model(path: Path) -> ModelBundle:
    """Loads the file, which checks format, version, checksum and structure."""
    bundle = load_model(path)
    logger.info(f"Model file {path} is valid ({bundle.kind.value}, version {MODEL_FILE_VERSION})")
    emit(f"OK: {path} ({bundle.kind.value} model, version {MODEL_FILE_VERSION})")
    return bundle


def register_model_commands(app: typer.Typer):
    """
    Register the `model` command group with the CLI app.

    Args:
        app: The Typer app instance
    """
    model_app = typer.Typer(help="Inspect and validate saved model files.", no_args_is_help=True)
    app.add_typer(model_app, name="model")

    @model_app.command("inspect")
    def inspect(path: Path = typer.Argument(..., help="Model file to describe.")):
        """Prints the header, kind, dimension, lambda, update count, forest size and importance."""
        run_command("model inspect", inspect_model, path=path)

    @model_app.command("validate")
    def validate(path: Path = typer.Argument(..., help="Model file to check.")):
        """Verifies the format version and checksum; exits with 2 on failure."""
        run_command("model validate", validate_model, path=path)
