"""
Experiment matrix command.
Runs effectiveness, reusability, transferability or feature-importance
experiments and prints their result tables.
"""
import logging
from pathlib import Path
from typing import List, Optional

import typer

from src.commands.base import CommandContext, command_context, emit, run_command
from src.experiments import ExperimentKind, ExperimentResult, build_spec, run_experiment
from src.formatting.markdown_formatter import format_df_to_markdown
from src.policies import PolicyKind
from src.simulation.campaign import CampaignOptions

logger = logging.getLogger(__name__)

# Per-tick tables are written to CSV only
_CSV_ONLY = {"coverage.csv", "plot_data.csv", "importance_history.csv"}


def run_experiment_matrix(kind: ExperimentKind, programs: List[str], policies: Optional[List[str]],
                          repetitions: int, ticks: int, baseline: str, model_dir: Optional[Path], config: Optional[Path],
                          context: CommandContext, training_campaigns: int = 3) -> ExperimentResult:
    options = CampaignOptions.from_file(config, context.settings) if config is not None \
        else CampaignOptions.from_settings(context.settings)
    spec = build_spec(
        kind=kind,
        programs=programs,
        policies=[PolicyKind.parse(p) for p in policies] if policies else [PolicyKind.RANDOM, PolicyKind.ML_OL],
        repetitions=repetitions,
        training_campaigns=training_campaigns,
        ticks=ticks,
        output_dir=context.out_dir / kind.value,
        baseline=PolicyKind.parse(baseline),
        rng_seed=0 if context.seed is None else context.seed,
        jobs=context.jobs,
        model_dir=model_dir if model_dir is not None else context.out_dir / "models",
        options=options,
    )
    result = run_experiment(spec)
    for name, frame in result.tables.items():
        if name in _CSV_ONLY:
            continue
        emit(f"## {name}\n\n{format_df_to_markdown(frame)}\n")
    emit(f"Wrote {len(result.files)} files to {spec.output_dir}")
    return result


def register_experiment_commands(app: typer.Typer):
    """
    Register the experiment command with the CLI app.

    Args:
        app: The Typer app instance
    """

    @app.command("experiment")
    def experiment(
        ctx: typer.Context,
        kind: ExperimentKind = typer.Argument(..., help="effectiveness | reusability | transferability | feature-importance."),
        programs: List[str] = typer.Option(..., "--program", "-p", help="Program reference; repeat per program."),
        policies: Optional[List[str]] = typer.Option(None, "--policy", help="Policy to compare; repeat per policy."),
        repetitions: int = typer.Option(5, "--repetitions", "-r", help="Campaigns per (program, policy)."),
        training_campaigns: int = typer.Option(
            3, "--training-campaigns", help="Chained campaigns that train each reused model."),
        ticks: int = typer.Option(200, "--ticks", help="Campaign length in ticks."),
        baseline: str = typer.Option("random", "--baseline", help="Policy the p-values compare against."),
        model_dir: Optional[Path] = typer.Option(None, "--model-dir", help="Directory of per-program model files."),
        config: Optional[Path] = typer.Option(None, "--config", help="JSON file with campaign options."),
    ):
        """Runs an experiment matrix and writes its CSV tables and experiment.json manifest."""
        context = command_context(ctx)
        run_command("experiment", run_experiment_matrix, kind=kind, programs=programs, policies=policies,
                    repetitions=repetitions, ticks=ticks, baseline=baseline, model_dir=model_dir,
                    training_campaigns=training_campaigns, config=config, context=context)
