"""
Single-campaign command.
Runs one simulated campaign and writes its coverage curve, dispatch log,
training log, summary and (for learned policies) the final model file.
"""
import json
import logging
from pathlib import Path
from typing import Dict, Optional

import typer

from src.commands.base import command_context, emit, run_command
from src.config import SchedulerSettings
from src.coordinator import write_dispatch_log
from src.formatting.markdown_formatter import format_mapping_to_markdown
from src.learning.bundle import load_model, save_model
from src.policies import PolicyKind
from src.simulation.benchmarks import resolve_program
from src.simulation.campaign import CampaignConfig, CampaignOptions, run_campaign, training_log_for

logger = logging.getLogger(__name__)


def run_single_campaign(program: str, policy: str, ticks: Optional[int], config: Optional[Path],
                        init_model: Optional[Path], freeze: bool, repetition: int, naive_seed: bool,
                        seed: Optional[int], out_dir: Path, settings: SchedulerSettings) -> Dict[str, Path]:
    """
    Runs one campaign and writes `<out>/<program>_<policy>_rep<N>.*` artifacts.

    Returns:
        The written files keyed by artifact kind.
    """
    kind = PolicyKind.parse(policy)
    model = resolve_program(program)
    overrides = {"ticks": ticks, "naive_seed": True if naive_seed else None}
    if config is not None:
        options = CampaignOptions.from_file(config, settings, **overrides)
    else:
        options = CampaignOptions.from_settings(settings, **overrides)
    bundle = load_model(init_model) if init_model is not None else None
    cfg = CampaignConfig(
        program=model, policy=kind, rng_seed=0 if seed is None else seed, repetition=repetition,
        options=options, initial_model=bundle,
        initial_training=training_log_for(bundle) if bundle is not None else None,
        frozen_model=freeze,
    )
    stats = run_campaign(cfg)

    stem = f"{model.name}_{kind.value}_rep{repetition}"
    files = {
        "stats": stats.write_csv(out_dir / f"{stem}.stats.csv"),
        "dispatch_log": write_dispatch_log(stats.dispatch_log, out_dir / f"{stem}.dispatch.csv", model.name),
        "training_log": stats.training_log.write_csv(out_dir / f"{stem}.training.csv"),
    }
    if stats.final_bundle is not None:
        stats.final_bundle.training_log_ref = str(files["training_log"])
        files["model"] = save_model(stats.final_bundle, out_dir / f"{stem}.model")

    summary = stats.summary()
    summary["files"] = {name: str(path) for name, path in files.items()}
    summary_path = out_dir / f"{stem}.summary.json"
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    files["summary"] = summary_path
    logger.info(f"Wrote campaign summary to {summary_path}")

    emit(format_mapping_to_markdown({k: v for k, v in summary.items() if k != "files"}))
    return files


def register_run_commands(app: typer.Typer):
    """
    Register the single-campaign command with the CLI app.

    Args:
        app: The Typer app instance
    """

    @app.command("run")
    def run(
        ctx: typer.Context,
        program: str = typer.Option(..., "--program", "-p", help="Program file, preset name or gen: spec."),
        policy: str = typer.Option("random", "--policy", help="random | heuristic-afl | ml-ol | ml-rf | ml-en."),
        ticks: Optional[int] = typer.Option(None, "--ticks", help="Campaign length in ticks."),
        config: Optional[Path] = typer.Option(None, "--config", help="JSON file with campaign options."),
        init_model: Optional[Path] = typer.Option(None, "--init-model", help="Model file loaded before tick 0."),
        freeze: bool = typer.Option(False, "--freeze", help="Keep the model fixed (prediction only)."),
        repetition: int = typer.Option(0, "--repetition", min=0, help="Repetition index recorded in outputs."),
        naive_seed: bool = typer.Option(False, "--naive-seed", help="Start from one 4-byte default-path seed."),
    ):
        """Runs one campaign and writes its stats CSV, logs and final model."""
        context = command_context(ctx)
        run_command("run", run_single_campaign, program=program, policy=policy, ticks=ticks, config=config,
                    init_model=init_model, freeze=freeze, repetition=repetition, naive_seed=naive_seed,
                    seed=context.seed, out_dir=context.out_dir, settings=context.settings)
