"""
Configuration for the seed scheduler.
Tunable defaults live in SchedulerSettings and can be overridden through
SEED_SCHED_* environment variables or a .env file.
"""
import logging
import math
from functools import lru_cache
from typing import Optional

from dotenv import load_dotenv
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

logger = logging.getLogger(__name__)

# Fixed dimension of the utility feature vector
FEATURE_DIMENSION = 10


class SchedulerSettings(BaseSettings):
    """Environment-backed defaults for campaigns, learners and the simulator."""

    model_config = SettingsConfigDict(env_prefix="SEED_SCHED_", extra="ignore")

    log_level: str = "INFO"

    # Online learner (RLS)
    rls_lambda: float = Field(default=1.0, gt=0)

    # Offline learner (random forest)
    rf_n_trees: int = Field(default=100, ge=1)
    rf_max_depth: Optional[int] = Field(default=None, ge=1)
    rf_min_samples_leaf: int = Field(default=2, ge=1)
    rf_features_per_split: int = Field(default=math.ceil(FEATURE_DIMENSION / 3), ge=1)
    rf_bootstrap: bool = True
    rf_batch_size: int = Field(default=16, ge=1)

    # Coordinator
    label_window: int = Field(default=5, ge=1)
    dispatch_k: int = Field(default=1, ge=1)
    concolic_interval: int = Field(default=4, ge=1)

    # Simulator cost model
    fuzzer_epoch: int = Field(default=64, ge=1)
    concolic_budget: int = Field(default=48, ge=1)
    p_easy: float = Field(default=0.2, ge=0, le=1)
    p_ext: float = Field(default=0.3, ge=0, le=1)
    favored_bias: float = Field(default=0.7, ge=0, le=1)
    max_trace_length: int = Field(default=96, ge=2)
    size_jitter: int = Field(default=4, ge=0)


@lru_cache(maxsize=1)
def get_settings() -> SchedulerSettings:
    """Loads .env (if present) once and returns the process-wide settings."""
    load_dotenv()
    settings = SchedulerSettings()
    logger.debug(f"Loaded scheduler settings: {settings.model_dump()}")
    return settings
