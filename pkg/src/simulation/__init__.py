from src.simulation.benchmarks import PRESETS, generate_preset, preset_names, resolve_program
from src.simulation.campaign import (
    CampaignConfig,
    CampaignOptions,
    CampaignStats,
    InitialSeed,
    naive_initial_seeds,
    run_campaign,
)
from src.simulation.concolic import concolic_step
from src.simulation.fuzzer import FuzzerState, fuzzer_epoch_step
from src.simulation.statistics import MannWhitneyResult, mann_whitney_u

__all__ = [
    "PRESETS",
    "CampaignConfig",
    "CampaignOptions",
    "CampaignStats",
    "FuzzerState",
    "InitialSeed",
    "MannWhitneyResult",
    "concolic_step",
    "fuzzer_epoch_step",
    "generate_preset",
    "mann_whitney_u",
    "naive_initial_seeds",
    "preset_names",
    "resolve_program",
    "run_campaign",
]
