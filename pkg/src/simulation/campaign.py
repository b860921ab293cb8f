"""
Campaign driver for the simulated hybrid fuzzing loop.

Per tick: one fuzzer epoch, label maturation, feedback, ranking and dispatch
(every `concolic_interval` ticks), concolic solving, import of the generated
inputs and a coverage sample. A campaign is a pure function of its config.
"""
import copy
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from src.config import SchedulerSettings, get_settings
from src.coordinator import Coordinator, DispatchRecord
from src.learning.bundle import ModelBundle
from src.learning.forest import ForestParams
from src.lineage import Seed, SeedOrigin, TrainingLog
from src.policies import LearnedPolicy, PolicyKind, make_policy
from src.program_model import BranchId, ProgramModel
from src.scheduling_interface import ConfigError, SchedulerError
from src.simulation.concolic import concolic_step
from src.simulation.fuzzer import FuzzerState, fuzzer_epoch_step
from src.utils import StageTimings, derive_seed

logger = logging.getLogger(__name__)

NAIVE_SEED_SIZE = 4
DEFAULT_INITIAL_SIZES = (8, 16, 32, 64)
STATS_COLUMNS = ["tick", "policy", "program", "repetition", "covered"]


class InitialSeed(BaseModel):
    """An initial corpus entry; without a trace it is executed from the entry with the campaign rng."""

    model_config = ConfigDict(frozen=True)

    size: int = Field(ge=1)
    trace: Optional[Tuple[int, ...]] = None


def naive_initial_seeds() -> List[InitialSeed]:
    """The naive corpus: one 4-byte input following the default path."""
    return [InitialSeed(size=NAIVE_SEED_SIZE, trace=None)]


def training_log_for(bundle: ModelBundle) -> Optional[TrainingLog]:
    """The training log a saved forest was fitted on, when the bundle references an existing file."""
    if bundle.rf is None or not bundle.training_log_ref:
        return None
    path = Path(bundle.training_log_ref)
    if not path.exists():
        logger.warning(f"Training log {path} referenced by the model is missing; the forest refits on new pairs only")
        return None
    return TrainingLog.read_csv(path)


class CampaignOptions(BaseModel):
    """
    Tunables of a campaign; defaults come from SchedulerSettings. Can be read
    from a JSON config file whose keys mirror these fields.
    """

    model_config = ConfigDict(extra="forbid")

    ticks: int = Field(default=200, ge=0)
    fuzzer_epoch: int = Field(default=64, ge=1)
    concolic_budget: int = Field(default=48, ge=1)
    label_window: int = Field(default=5, ge=1)
    dispatch_k: int = Field(default=1, ge=1)
    concolic_interval: int = Field(default=4, ge=1)
    p_easy: float = Field(default=0.2, ge=0, le=1)
    p_ext: float = Field(default=0.3, ge=0, le=1)
    favored_bias: float = Field(default=0.7, ge=0, le=1)
    max_trace_length: int = Field(default=96, ge=2)
    size_jitter: int = Field(default=4, ge=0)
    rls_lambda: float = Field(default=1.0, gt=0)
    rf_batch_size: int = Field(default=16, ge=1)
    forest: ForestParams = Field(default_factory=ForestParams)
    naive_seed: bool = False
    initial_seeds: Optional[List[InitialSeed]] = None

    @classmethod
    def from_settings(cls, settings: Optional[SchedulerSettings] = None, **overrides) -> "CampaignOptions":
        settings = settings or get_settings()
        values: Dict[str, Any] = {
            "fuzzer_epoch": settings.fuzzer_epoch,
            "concolic_budget": settings.concolic_budget,
            "label_window": settings.label_window,
            "dispatch_k": settings.dispatch_k,
            "concolic_interval": settings.concolic_interval,
            "p_easy": settings.p_easy,
            "p_ext": settings.p_ext,
            "favored_bias": settings.favored_bias,
            "max_trace_length": settings.max_trace_length,
            "size_jitter": settings.size_jitter,
            "rls_lambda": settings.rls_lambda,
            "rf_batch_size": settings.rf_batch_size,
            "forest": ForestParams(
                n_trees=settings.rf_n_trees,
                max_depth=settings.rf_max_depth,
                min_samples_leaf=settings.rf_min_samples_leaf,
                features_per_split=settings.rf_features_per_split,
                bootstrap=settings.rf_bootstrap,
            ),
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return cls(**values)
        except ValidationError as e:
            raise ConfigError(f"Invalid campaign options: {e}")

    @classmethod
    def from_file(cls, path: Union[str, Path], settings: Optional[SchedulerSettings] = None,
                  **overrides) -> "CampaignOptions":
        """Reads a JSON config file; keyword overrides (CLI flags) win over file values."""
        path = Path(path)
        try:
            raw = cls.model_validate_json(path.read_text(encoding="utf-8")).model_dump(exclude_unset=True)
        except OSError as e:
            raise ConfigError(f"Cannot read campaign config {path}: {e}")
        except ValidationError as e:
            raise ConfigError(f"Invalid campaign config {path}: {e}")
        raw.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_settings(settings, **raw)


class CampaignConfig(BaseModel):
    """Everything a campaign depends on; run_campaign is a pure function of it."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    program: ProgramModel
    policy: PolicyKind
    rng_seed: int = 0
    repetition: int = Field(default=0, ge=0)
    options: CampaignOptions = Field(default_factory=CampaignOptions)
    initial_model: Optional[ModelBundle] = None
    initial_training: Optional[TrainingLog] = None
    frozen_model: bool = False

    @model_validator(mode="after")
    def _check(self) -> "CampaignConfig":
        if self.initial_model is not None and self.policy.model_kind is not self.initial_model.kind:
            raise ValueError(
                f"Policy '{self.policy.value}' cannot start from a {self.initial_model.kind.value} model")
        return self

    @property
    def ticks(self) -> int:
        return self.options.ticks


@dataclass
class CampaignStats:
    program: str
    policy: str
    repetition: int
    rng_seed: int
    ticks: int
    initial_coverage: int
    coverage: List[int]
    dispatch_log: List[DispatchRecord]
    accounting: Dict[str, int]
    queue_size: int
    dispatched_seeds: int
    weight_history: List[Dict] = field(default_factory=list)
    importance_history: List[Dict] = field(default_factory=list)
    timings: Dict[str, float] = field(default_factory=dict, compare=False)
    timing_counts: Dict[str, int] = field(default_factory=dict, compare=False)
    final_bundle: Optional[ModelBundle] = field(default=None, compare=False)
    training_log: Optional[TrainingLog] = field(default=None, compare=False)
    queue: List[Seed] = field(default_factory=list, compare=False)

    @property
    def final_coverage(self) -> int:
        return self.coverage[-1] if self.coverage else self.initial_coverage

    @property
    def explored_fraction(self) -> float:
        """Share of the final queue ever dispatched to the concolic executor."""
        return self.dispatched_seeds / self.queue_size if self.queue_size else 0.0

    def coverage_frame(self) -> pd.DataFrame:
        rows = [(tick, self.policy, self.program, self.repetition, covered)
                for tick, covered in enumerate(self.coverage, start=1)]
        return pd.DataFrame(rows, columns=STATS_COLUMNS)

    def write_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.coverage_frame().to_csv(path, index=False)
        logger.info(f"Wrote coverage stats ({len(self.coverage)} ticks) to {path}")
        return path

    def summary(self) -> Dict[str, Any]:
        return {
            "program": self.program,
            "policy": self.policy,
            "repetition": self.repetition,
            "rng_seed": self.rng_seed,
            "ticks": self.ticks,
            "initial_coverage": self.initial_coverage,
            "final_coverage": self.final_coverage,
            "queue_size": self.queue_size,
            "dispatched_seeds": self.dispatched_seeds,
            "explored_fraction": self.explored_fraction,
            "accounting": self.accounting,
            "stage_timings_seconds": self.timings,
        }


def _seed_queue(state: FuzzerState, cfg: CampaignConfig, rng: np.random.Generator) -> None:
    options = cfg.options
    if options.initial_seeds:
        corpus = list(options.initial_seeds)
    elif options.naive_seed:
        corpus = naive_initial_seeds()
    else:
        corpus = [InitialSeed(size=s) for s in DEFAULT_INITIAL_SIZES]
    model = cfg.program
    for entry in corpus:
        if entry.trace is not None:
            trace: List[BranchId] = list(entry.trace)
        elif options.naive_seed and not options.initial_seeds:
            trace = model.default_trace(options.max_trace_length)
        else:
            trace = model.walk(model.entry, entry.size, rng, options.max_trace_length)
        state.admit(state.new_seed(None, SeedOrigin.INITIAL, entry.size, trace), force=True)


def run_campaign(cfg: CampaignConfig) -> CampaignStats:
    """
    Runs one campaign to completion.

    Raises:
        SchedulerError: Propagated from the components; unexpected failures are wrapped.
    """
    options = cfg.options
    model = cfg.program
    label = f"{model.name}/{cfg.policy.value}/rep{cfg.repetition}"
    if 0 < cfg.ticks <= options.label_window:
        logger.warning(
            f"{label}: {cfg.ticks} ticks do not exceed the label window {options.label_window}; "
            f"no label will mature")
    try:
        fuzz_seq, concolic_seq, corpus_seq = np.random.SeedSequence(cfg.rng_seed).spawn(3)
        fuzz_rng = np.random.default_rng(fuzz_seq)
        concolic_rng = np.random.default_rng(concolic_seq)
        corpus_rng = np.random.default_rng(corpus_seq)

        timings = StageTimings()
        bundle = copy.deepcopy(cfg.initial_model) if cfg.initial_model is not None else None
        training = cfg.initial_training.pairs() if cfg.initial_training is not None else None
        policy = make_policy(
            cfg.policy, derive_seed(cfg.rng_seed, 1), lam=options.rls_lambda, forest_params=options.forest,
            batch_size=options.rf_batch_size, bundle=bundle, frozen=cfg.frozen_model, timings=timings,
            training_data=training)
        if bundle is not None:
            logger.info(f"{label}: Loaded initial model ({bundle.kind.value}) before tick 0")

        state = FuzzerState(model, fuzzer_epoch=options.fuzzer_epoch, p_easy=options.p_easy,
                            favored_bias=options.favored_bias, max_trace_length=options.max_trace_length,
                            size_jitter=options.size_jitter)
        coordinator = Coordinator(policy, model, k=options.dispatch_k, label_window=options.label_window,
                                  timings=timings)
        _seed_queue(state, cfg, corpus_rng)
        initial_coverage = state.coverage.covered_count
        logger.info(f"{label}: campaign start, {len(state.queue)} initial seeds cover {initial_coverage} branches")

        coverage: List[int] = []
        for tick in range(1, cfg.ticks + 1):
            state.tick = tick
            fuzzer_epoch_step(state, model, fuzz_rng)
            matured = coordinator.mature(state.lineage, tick)
            coordinator.feedback(matured)
            if (tick - 1) % options.concolic_interval == 0:
                records = coordinator.dispatch(state.queue, state.view(), state.lineage, tick)
                for record in records:
                    for child in concolic_step(state.seeds[record.seed], state, options.concolic_budget,
                                               concolic_rng, p_ext=options.p_ext):
                        state.admit(child)
            coverage.append(state.coverage.covered_count)

        accounting = coordinator.accounting()
    except SchedulerError:
        raise
    except Exception as e:
        logger.exception(f"{label}: unexpected error during campaign: {e}")
        raise SchedulerError(f"Unexpected error during campaign {label}: {e}") from e

    final_bundle = policy.bundle if isinstance(policy, LearnedPolicy) else None
    stats = CampaignStats(
        program=model.name,
        policy=cfg.policy.value,
        repetition=cfg.repetition,
        rng_seed=cfg.rng_seed,
        ticks=cfg.ticks,
        initial_coverage=initial_coverage,
        coverage=coverage,
        dispatch_log=list(coordinator.dispatch_log),
        accounting=accounting,
        queue_size=len(state.queue),
        dispatched_seeds=len(coordinator.dispatched),
        weight_history=list(policy.weight_history) if isinstance(policy, LearnedPolicy) else [],
        importance_history=list(policy.importance_history) if isinstance(policy, LearnedPolicy) else [],
        timings=timings.summary(),
        timing_counts={stage: timings.count(stage) for stage in timings.stages()},
        final_bundle=final_bundle,
        training_log=coordinator.training_log,
        queue=list(state.queue),
    )
    logger.info(
        f"{label}: campaign end after {cfg.ticks} ticks, covered {stats.final_coverage}/{model.branch_count}, "
        f"queue {stats.queue_size}, dispatched {stats.dispatched_seeds}")
    return stats
