"""
Benchmark generation command.
Writes a program-model file from a preset or generator spec and prints its summary.
"""
import logging
from pathlib import Path
from typing import List, Optional

import typer

from src.commands.base import command_context, emit, run_command
from src.formatting.markdown_formatter import format_mapping_to_markdown
from src.program_model import generate_program, save_program, summarize_program
from src.simulation.benchmarks import (
    DEFAULT_PRESET_SEED,
    apply_generator_overrides,
    parse_generator_spec,
    preset_params,
)

logger = logging.getLogger(__name__)


def generate_benchmark(ref: str, overrides: Optional[List[str]], output: Optional[Path], seed: Optional[int],
                       out_dir: Path) -> Path:
    """
    Generates the program named by `ref` (preset name, `preset:NAME` or
    `gen:key=value,...@SEED`) with `overrides` applied and saves it.

    The global --seed replaces the preset seed; a `gen:` spec keeps its own `@SEED`.
    """
    if ref.startswith("gen:"):
        params, gen_seed = parse_generator_spec(ref[len("gen:"):])
    else:
        params = preset_params(ref.removeprefix("preset:"))
        gen_seed = DEFAULT_PRESET_SEED if seed is None else seed
    if overrides:
        params = apply_generator_overrides(params, overrides)
    model = generate_program(params, gen_seed)
    path = save_program(model, output or out_dir / f"{model.name}.json")
    summary = {**summarize_program(model), "path": str(path)}
    emit(format_mapping_to_markdown(summary))
    return path


def register_generate_commands(app: typer.Typer):
    """
    Register the benchmark generation command with the CLI app.

    Args:
        app: The Typer app instance
    """

    @app.command("gen")
    def gen(
        ctx: typer.Context,
        ref: str = typer.Argument("learnable", help="Preset name, preset:NAME or gen:key=value,...@SEED."),
        overrides: Optional[List[str]] = typer.Option(None, "--set", help="Generator parameter override KEY=VALUE."),
        output: Optional[Path] = typer.Option(None, "--output", "-o", help="Output file (default <out>/<name>.json)."),
    ):
        """Generates a synthetic program-model file and prints its summary."""
        context = command_context(ctx)
        run_command("gen", generate_benchmark, ref=ref, overrides=overrides, output=output,
                    seed=context.seed, out_dir=context.out_dir)
