"""
Experiment matrices over simulated campaigns.

Four experiment kinds share one runner:
  - effectiveness: coverage curves per (program, policy) and Mann-Whitney
    p-values of final coverage against a baseline policy;
  - reusability: fresh vs. initialized learned policy from the naive seed;
  - transferability: the N x N matrix of improvements when the model learned on
    one program initializes campaigns on another;
  - feature-importance: forest importance vectors per program.

Campaign seeds derive from the experiment seed and the program identity, so any
table can be regenerated from the manifest alone.
"""
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from src.features import FEATURE_NAMES
from src.learning.bundle import ModelBundle, load_model, save_model
from src.learning.forest import rf_feature_importance, rf_fit
from src.lineage import TrainingLog
from src.policies import PolicyKind
from src.program_model import ProgramModel
from src.scheduling_interface import ConfigError, ExperimentError, SchedulerError
from src.simulation.benchmarks import resolve_program
from src.simulation.campaign import CampaignConfig, CampaignOptions, CampaignStats, run_campaign, training_log_for
from src.simulation.statistics import MIN_SAMPLE_SIZE, mann_whitney_u
from src.utils import derive_seed, sha256_hex

logger = logging.getLogger(__name__)

# Salts separating the seed streams of the experiment kinds
EFFECTIVENESS_SALT = 11
TRAINING_SALT = 23
REUSE_SALT = 37
IMPORTANCE_SALT = 41

RunKey = Tuple[str, str, int]


class ExperimentKind(str, Enum):
    EFFECTIVENESS = "effectiveness"
    REUSABILITY = "reusability"
    TRANSFERABILITY = "transferability"
    FEATURE_IMPORTANCE = "feature-importance"


class ExperimentSpec(BaseModel):
    """What to run: kind, programs (references), policies, repetitions, ticks and where to write."""

    model_config = ConfigDict(frozen=True)

    kind: ExperimentKind
    programs: List[str] = Field(min_length=1)
    policies: List[PolicyKind] = Field(default_factory=lambda: [PolicyKind.RANDOM, PolicyKind.ML_OL])
    repetitions: int = Field(default=5, ge=1)
    training_campaigns: int = Field(default=3, ge=1)
    ticks: int = Field(default=200, ge=0)
    output_dir: Path = Path("out")
    baseline: PolicyKind = PolicyKind.RANDOM
    rng_seed: int = 0
    jobs: int = Field(default=1, ge=1)
    model_dir: Optional[Path] = None
    options: CampaignOptions = Field(default_factory=CampaignOptions)

    @model_validator(mode="after")
    def _check(self) -> "ExperimentSpec":
        if self.kind is ExperimentKind.TRANSFERABILITY and len(self.programs) < 2:
            raise ValueError("Transferability needs at least 2 programs")
        if not self.policies:
            raise ValueError("At least one policy is required")
        return self

    @property
    def models_path(self) -> Path:
        return self.model_dir if self.model_dir is not None else self.output_dir / "models"

    @property
    def learned_policy(self) -> PolicyKind:
        """Policy used by reuse and transfer runs: the first learned one listed, else ml-ol."""
        return next((p for p in self.policies if p.model_kind is not None), PolicyKind.ML_OL)


def build_spec(**values) -> ExperimentSpec:
    try:
        return ExperimentSpec(**values)
    except ValidationError as e:
        raise ConfigError(f"Invalid experiment spec: {e}")


@dataclass
class ExperimentResult:
    kind: ExperimentKind
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)
    files: List[Path] = field(default_factory=list)
    runs: Dict[RunKey, CampaignStats] = field(default_factory=dict)
    manifest: Dict[str, Any] = field(default_factory=dict)


def program_key(model: ProgramModel) -> int:
    """Stable integer identity of a program, independent of its position in a spec."""
    return int(sha256_hex(f"{model.name}:{model.gen_seed}:{model.branch_count}".encode("utf-8"))[:12], 16)


def run_matrix(configs: Dict[Any, CampaignConfig], jobs: int = 1) -> Dict[Any, CampaignStats]:
    """
    Runs independent campaigns, in a thread pool when jobs > 1.
    Results are keyed like `configs`, so aggregation does not depend on completion order.
    """
    if jobs <= 1 or len(configs) <= 1:
        return {key: run_campaign(cfg) for key, cfg in configs.items()}
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        futures = {key: pool.submit(run_campaign, cfg) for key, cfg in configs.items()}
        return {key: future.result() for key, future in futures.items()}


def _campaign(spec: ExperimentSpec, program: ProgramModel, policy: PolicyKind, seed: int,
              repetition: int = 0, **kwargs) -> CampaignConfig:
    options = spec.options.model_copy(update={"ticks": spec.ticks, **kwargs.pop("option_updates", {})})
    try:
        return CampaignConfig(program=program, policy=policy, rng_seed=seed, repetition=repetition,
                              options=options, **kwargs)
    except ValidationError as e:
        raise ConfigError(f"Invalid campaign for {program.name}/{policy.value}: {e}")


def _coverage_frames(runs: Dict[RunKey, CampaignStats]) -> Tuple[pd.DataFrame, pd.DataFrame]:
    frames = [runs[key].coverage_frame() for key in sorted(runs)]
    coverage = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(
        columns=["tick", "policy", "program", "repetition", "covered"])
    plot = (coverage.groupby(["tick", "program", "policy"])["covered"]
            .agg(["mean", "min", "max"]).reset_index()
            .sort_values(["program", "policy", "tick"], kind="stable").reset_index(drop=True))
    return coverage, plot[["tick", "program", "policy", "mean", "min", "max"]]


def _timing_frame(runs: Dict[RunKey, CampaignStats]) -> pd.DataFrame:
    rows = []
    for (program, policy, repetition) in sorted(runs):
        for stage, seconds in runs[(program, policy, repetition)].timings.items():
            rows.append({"program": program, "policy": policy, "stage": stage, "seconds": seconds})
    if not rows:
        return pd.DataFrame(columns=["policy", "stage", "mean_seconds"])
    frame = pd.DataFrame(rows)
    return (frame.groupby(["policy", "stage"])["seconds"].mean()
            .rename("mean_seconds").reset_index())


def _write(result: ExperimentResult, name: str, frame: pd.DataFrame, out_dir: Path) -> None:
    path = out_dir / name
    frame.to_csv(path, index=False)
    result.tables[name] = frame
    result.files.append(path)
    logger.info(f"Wrote {path}")


def _write_manifest(result: ExperimentResult, spec: ExperimentSpec, out_dir: Path,
                    seeds: Dict[str, Any]) -> None:
    result.manifest = {
        "kind": spec.kind.value,
        "programs": spec.programs,
        "policies": [p.value for p in spec.policies],
        "baseline": spec.baseline.value,
        "repetitions": spec.repetitions,
        "training_campaigns": spec.training_campaigns,
        "ticks": spec.ticks,
        "rng_seed": spec.rng_seed,
        "options": spec.options.model_dump(mode="json"),
        "campaign_seeds": seeds,
        "files": [p.name for p in result.files],
    }
    path = out_dir / "experiment.json"
    path.write_text(json.dumps(result.manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    result.files.append(path)


def run_effectiveness(spec: ExperimentSpec, programs: List[ProgramModel], out_dir: Path) -> ExperimentResult:
    result = ExperimentResult(kind=spec.kind)
    configs: Dict[RunKey, CampaignConfig] = {}
    seeds: Dict[str, int] = {}
    for model in programs:
        for rep in range(spec.repetitions):
            # Paired runs: every policy sees the same seed for a given repetition
            seed = derive_seed(spec.rng_seed, program_key(model), rep, EFFECTIVENESS_SALT)
            seeds[f"{model.name}/rep{rep}"] = seed
            for policy in spec.policies:
                configs[(model.name, policy.value, rep)] = _campaign(spec, model, policy, seed, rep)
    runs = run_matrix(configs, spec.jobs)
    result.runs = runs

    coverage, plot = _coverage_frames(runs)
    _write(result, "coverage.csv", coverage, out_dir)
    _write(result, "plot_data.csv", plot, out_dir)

    rows = []
    for model in programs:
        base = [runs[(model.name, spec.baseline.value, r)].final_coverage for r in range(spec.repetitions)] \
            if spec.baseline in spec.policies else None
        for policy in spec.policies:
            finals = [runs[(model.name, policy.value, r)].final_coverage for r in range(spec.repetitions)]
            row = {
                "program": model.name,
                "policy": policy.value,
                "mean_final_coverage": float(np.mean(finals)),
                "std_final_coverage": float(np.std(finals)),
                "explored_fraction": float(np.mean(
                    [runs[(model.name, policy.value, r)].explored_fraction for r in range(spec.repetitions)])),
                "U": np.nan,
                "p_value": np.nan,
            }
            if base is not None and policy is not spec.baseline and spec.repetitions >= MIN_SAMPLE_SIZE:
                test = mann_whitney_u(finals, base)
                row["U"], row["p_value"] = test.U, test.p
            rows.append(row)
    if spec.baseline not in spec.policies:
        logger.warning(f"Baseline policy '{spec.baseline.value}' was not run; p-values omitted")
    elif spec.repetitions < MIN_SAMPLE_SIZE:
        logger.warning(f"{spec.repetitions} repetitions are too few for Mann-Whitney; p-values omitted")
    _write(result, "summary.csv", pd.DataFrame(rows), out_dir)
    _write(result, "timings.csv", _timing_frame(runs), out_dir)
    _write_manifest(result, spec, out_dir, seeds)
    return result


def model_path(spec: ExperimentSpec, model: ProgramModel) -> Path:
    return spec.models_path / f"{model.name}.model"


def train_model(spec: ExperimentSpec, model: ProgramModel, seeds: Dict[str, int]) -> ModelBundle:
    """
    Trains the learned policy's model on `model` and saves it.

    Training chains `spec.training_campaigns` campaigns: each one starts from the
    model and the training pairs left by the previous ones, so the saved model
    has seen every pair once.
    """
    bundle: Optional[ModelBundle] = None
    log = TrainingLog()
    for run in range(spec.training_campaigns):
        seed = derive_seed(spec.rng_seed, program_key(model), run, TRAINING_SALT)
        seeds[f"{model.name}/training/run{run}"] = seed
        kwargs: Dict[str, Any] = {}
        if bundle is not None:
            kwargs["initial_model"] = bundle
            if bundle.rf is not None and len(log):
                kwargs["initial_training"] = log.copy()
        stats = run_campaign(_campaign(spec, model, spec.learned_policy, seed, run, **kwargs))
        if stats.final_bundle is None:
            raise ExperimentError(f"Training campaign on {model.name} produced no model")
        bundle = stats.final_bundle
        log.append_log(stats.training_log)
    path = model_path(spec, model)
    bundle.training_log_ref = str(path.with_suffix(".training.csv"))
    log.write_csv(bundle.training_log_ref)
    save_model(bundle, path)
    logger.info(f"Trained {bundle.kind.value} model for {model.name} over {spec.training_campaigns} "
                f"campaigns, {len(log)} pairs")
    return bundle


def _reuse_configs(spec: ExperimentSpec, source: Optional[str], bundle: Optional[ModelBundle],
                   target: ProgramModel, seeds: Dict[str, int]) -> Dict[Tuple[str, int], CampaignConfig]:
    configs = {}
    for rep in range(spec.repetitions):
        seed = derive_seed(spec.rng_seed, program_key(target), rep, REUSE_SALT)
        seeds[f"{target.name}/reuse/rep{rep}"] = seed
        kwargs = {"option_updates": {"naive_seed": True}}
        if bundle is not None:
            kwargs["initial_model"] = bundle
            kwargs["initial_training"] = training_log_for(bundle)
        configs[(source or "fresh", rep)] = _campaign(spec, target, spec.learned_policy, seed, rep, **kwargs)
    return configs


def relative_improvement(initialized: List[int], fresh: List[int]) -> float:
    """Mean over repetitions of 100 * (initialized - fresh) / fresh."""
    values = [100.0 * (i - f) / f if f else 0.0 for i, f in zip(initialized, fresh)]
    return float(np.mean(values))


def reuse_improvement(spec: ExperimentSpec, source: ProgramModel, bundle: ModelBundle,
                      target: ProgramModel, seeds: Dict[str, int],
                      fresh_cache: Dict[str, List[int]]) -> Tuple[float, List[int], List[int]]:
    """
    Runs the initialized campaigns of `target` with the model of `source`
    against fresh campaigns from the same seeds.
    """
    if target.name not in fresh_cache:
        fresh_runs = run_matrix(_reuse_configs(spec, None, None, target, seeds), spec.jobs)
        fresh_cache[target.name] = [fresh_runs[("fresh", r)].final_coverage for r in range(spec.repetitions)]
    init_runs = run_matrix(_reuse_configs(spec, source.name, bundle, target, seeds), spec.jobs)
    initialized = [init_runs[(source.name, r)].final_coverage for r in range(spec.repetitions)]
    fresh = fresh_cache[target.name]
    return relative_improvement(initialized, fresh), initialized, fresh


def run_reusability(spec: ExperimentSpec, programs: List[ProgramModel], out_dir: Path) -> ExperimentResult:
    result = ExperimentResult(kind=spec.kind)
    seeds: Dict[str, int] = {}
    rows = []
    fresh_cache: Dict[str, List[int]] = {}
    for model in programs:
        path = model_path(spec, model)
        bundle = load_model(path) if path.exists() else train_model(spec, model, seeds)
        if path.exists():
            result.files.append(path)
        improvement, initialized, fresh = reuse_improvement(spec, model, bundle, model, seeds, fresh_cache)
        rows.append({
            "program": model.name,
            "policy": spec.learned_policy.value,
            "fresh_mean": float(np.mean(fresh)),
            "initialized_mean": float(np.mean(initialized)),
            "improvement_pct": improvement,
        })
    _write(result, "reuse.csv", pd.DataFrame(rows), out_dir)
    _write_manifest(result, spec, out_dir, seeds)
    return result


def run_transferability(spec: ExperimentSpec, programs: List[ProgramModel], out_dir: Path) -> ExperimentResult:
    result = ExperimentResult(kind=spec.kind)
    missing = [str(model_path(spec, m)) for m in programs if not model_path(spec, m).exists()]
    if missing:
        raise ExperimentError(
            f"Transferability needs a trained model per program; missing: {', '.join(missing)}. "
            f"Run the reusability experiment first.")
    bundles = {m.name: load_model(model_path(spec, m)) for m in programs}
    expected = spec.learned_policy.model_kind
    for name, bundle in bundles.items():
        if bundle.kind is not expected:
            raise ExperimentError(f"Model for {name} is {bundle.kind.value}, policy needs {expected.value}")
    seeds: Dict[str, int] = {}
    fresh_cache: Dict[str, List[int]] = {}
    names = [m.name for m in programs]
    matrix = pd.DataFrame(index=names, columns=names, dtype=np.float64)
    for source in programs:
        for target in programs:
            improvement, _, _ = reuse_improvement(spec, source, bundles[source.name], target, seeds, fresh_cache)
            matrix.loc[source.name, target.name] = improvement
            logger.info(f"Transfer {source.name} -> {target.name}: {improvement:+.2f}%")
    matrix.index.name = "model_from"
    _write(result, "transfer_matrix.csv", matrix.reset_index(), out_dir)
    _write_manifest(result, spec, out_dir, seeds)
    return result


def run_feature_importance(spec: ExperimentSpec, programs: List[ProgramModel], out_dir: Path) -> ExperimentResult:
    result = ExperimentResult(kind=spec.kind)
    seeds: Dict[str, int] = {}
    rows, history_rows = [], []
    for model in programs:
        seed = derive_seed(spec.rng_seed, program_key(model), IMPORTANCE_SALT)
        seeds[f"{model.name}/importance"] = seed
        stats = run_campaign(_campaign(spec, model, PolicyKind.ML_RF, seed))
        forest = stats.final_bundle.rf
        if not forest.fitted:
            pairs = stats.training_log.pairs()
            if not pairs:
                raise ExperimentError(
                    f"No labels matured on {model.name} within {spec.ticks} ticks; cannot fit a forest")
            forest = rf_fit(pairs, forest.params, seed)
        importance = rf_feature_importance(forest)
        rows.append({"program": model.name, **dict(zip(FEATURE_NAMES, importance.tolist()))})
        for snapshot in stats.importance_history:
            history_rows.append({"program": model.name, "refit": snapshot["refit"], "examples": snapshot["examples"],
                                 **dict(zip(FEATURE_NAMES, snapshot["importance"]))})
    _write(result, "feature_importance.csv", pd.DataFrame(rows, columns=["program"] + FEATURE_NAMES), out_dir)
    _write(result, "importance_history.csv",
           pd.DataFrame(history_rows, columns=["program", "refit", "examples"] + FEATURE_NAMES), out_dir)
    _write_manifest(result, spec, out_dir, seeds)
    return result


RUNNERS = {
    ExperimentKind.EFFECTIVENESS: run_effectiveness,
    ExperimentKind.REUSABILITY: run_reusability,
    ExperimentKind.TRANSFERABILITY: run_transferability,
    ExperimentKind.FEATURE_IMPORTANCE: run_feature_importance,
}


def run_experiment(spec: ExperimentSpec, program_seed: Optional[int] = None) -> ExperimentResult:
    """
    Resolves the programs of `spec`, runs the experiment and writes its CSV files
    and experiment.json manifest into `spec.output_dir`.

    Raises:
        ConfigError: On unresolvable programs.
        ExperimentError: When required model files are missing (transferability).
    """
    programs = [resolve_program(ref, program_seed) for ref in spec.programs]
    names = [p.name for p in programs]
    if len(set(names)) != len(names):
        raise ConfigError(f"Experiment programs must have distinct names, got {names}")
    out_dir = Path(spec.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    logger.info(
        f"Running {spec.kind.value} experiment: {len(programs)} programs, "
        f"{len(spec.policies)} policies, {spec.repetitions} repetitions, {spec.ticks} ticks")
    try:
        return RUNNERS[spec.kind](spec, programs, out_dir)
    except SchedulerError:
        raise
    except Exception as e:
        logger.exception(f"Unexpected error in {spec.kind.value} experiment: {e}")
        raise ExperimentError(f"Unexpected error in {spec.kind.value} experiment: {e}") from e
