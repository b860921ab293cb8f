# Implementations of the SeedSchedulingPolicy interface: random, AFL-style heuristic and learned utility models
import logging
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.features import transform_for_linear
from src.learning.bundle import ModelBundle, ModelKind, new_bundle
from src.learning.forest import ForestParams, rf_feature_importance, rf_fit, rf_predict
from src.learning.online_model import rls_predict, rls_update
from src.scheduling_interface import ConfigError, ModelError, SeedSchedulingPolicy
from src.utils import StageTimings, derive_seed

# Get a logger instance for this module
logger = logging.getLogger(__name__)


class PolicyKind(str, Enum):
    RANDOM = "random"
    HEURISTIC_AFL = "heuristic-afl"
    ML_OL = "ml-ol"
    ML_RF = "ml-rf"
    ML_EN = "ml-en"

    @property
    def model_kind(self) -> Optional[ModelKind]:
        return {
            PolicyKind.ML_OL: ModelKind.OL,
            PolicyKind.ML_RF: ModelKind.RF,
            PolicyKind.ML_EN: ModelKind.EN,
        }.get(self)

    @classmethod
    def parse(cls, name: str) -> "PolicyKind":
        try:
            return cls(name.strip().lower())
        except ValueError:
            valid = ", ".join(k.value for k in cls)
            raise ConfigError(f"Unknown policy '{name}'. Valid policies: {valid}")


class RandomPolicy(SeedSchedulingPolicy):
    """Scores seeds with uniform draws; the stream advances once per dispatch round."""

    def __init__(self, rng_seed: int):
        self.rng_seed = int(rng_seed)
        self.round = 0

    @property
    def name(self) -> str:
        return PolicyKind.RANDOM.value

    @property
    def needs_features(self) -> bool:
        return False

    def score(self, seeds: Sequence, features: np.ndarray) -> np.ndarray:
        rng = np.random.default_rng([self.rng_seed, self.round])
        return rng.random(len(seeds))

    def on_dispatch(self) -> None:
        self.round += 1

    def learn(self, matured: List[Tuple[np.ndarray, float]]) -> None:
        if matured:
            logger.warning(f"Ignoring {len(matured)} training pairs: policy '{self.name}' does not learn.")


class HeuristicAFLPolicy(SeedSchedulingPolicy):
    """
    AFL-style preference: seeds that first discovered new branches come first,
    then smaller inputs.
    """

    @property
    def name(self) -> str:
        return PolicyKind.HEURISTIC_AFL.value

    @property
    def needs_features(self) -> bool:
        return False

    def score(self, seeds: Sequence, features: np.ndarray) -> np.ndarray:
        # first_new_cov dominates: size only orders seeds inside [0, 1]
        first = np.array([s.first_new_cov for s in seeds], dtype=np.float64)
        size = np.array([s.size for s in seeds], dtype=np.float64)
        return 2.0 * first + 1.0 / (1.0 + size)

    def on_dispatch(self) -> None:
        pass

    def learn(self, matured: List[Tuple[np.ndarray, float]]) -> None:
        if matured:
            logger.warning(f"Ignoring {len(matured)} training pairs: policy '{self.name}' does not learn.")


class LearnedPolicy(SeedSchedulingPolicy):
    """
    Scores seeds with the utility predictions of a model bundle and trains it
    on matured labels.

    The online model learns every pair immediately. The forest collects pairs
    and refits on all of them once `batch_size` new pairs have arrived. A
    frozen policy keeps predicting but ignores feedback.
    """

    def __init__(self, kind: PolicyKind, bundle: ModelBundle, batch_size: int = 16,
                 frozen: bool = False, timings: Optional[StageTimings] = None,
                 training_data: Optional[List[Tuple[np.ndarray, float]]] = None):
        if kind.model_kind is None:
            raise ConfigError(f"Policy '{kind.value}' does not use a learned model.")
        if bundle.kind is not kind.model_kind:
            raise ConfigError(
                f"Policy '{kind.value}' needs a {kind.model_kind.value} model, got {bundle.kind.value}.")
        if batch_size < 1:
            raise ConfigError(f"Forest batch size must be at least 1, got {batch_size}")
        self.kind = kind
        self.bundle = bundle
        self.batch_size = batch_size
        self.frozen = frozen
        self.timings = timings if timings is not None else StageTimings()
        self.training_data: List[Tuple[np.ndarray, float]] = list(training_data or [])
        self.pairs_since_refit = 0
        self.refit_count = 0
        self.weight_history: List[Dict] = []
        self.importance_history: List[Dict] = []
        self._fallback_warned = False
        self._snapshot_weights()

    @property
    def name(self) -> str:
        return self.kind.value

    @property
    def needs_features(self) -> bool:
        return True

    @property
    def learns(self) -> bool:
        return not self.frozen

    def _online_scores(self, raw: np.ndarray) -> np.ndarray:
        with self.timings.measure(StageTimings.ONLINE_PREDICTION, raw.shape[0]):
            return np.atleast_1d(rls_predict(self.bundle.ol, transform_for_linear(raw)))

    def _forest_scores(self, raw: np.ndarray) -> np.ndarray:
        with self.timings.measure(StageTimings.OFFLINE_PREDICTION, raw.shape[0]):
            return np.atleast_1d(rf_predict(self.bundle.rf, raw))

    def score(self, seeds: Sequence, features: np.ndarray) -> np.ndarray:
        raw = np.asarray(features, dtype=np.float64)
        if raw.shape[0] == 0:
            return np.zeros(0)
        kind = self.bundle.kind
        forest_ready = self.bundle.rf is not None and self.bundle.rf.fitted
        if kind is ModelKind.OL:
            return self._online_scores(raw)
        if kind is ModelKind.RF:
            return self._forest_scores(raw) if forest_ready else np.zeros(raw.shape[0])
        online = self._online_scores(raw)
        if not forest_ready:
            if not self._fallback_warned:
                logger.warning("Ensemble forest is not fitted yet; scoring with the online model alone.")
                self._fallback_warned = True
            return online
        return (online + self._forest_scores(raw)) / 2.0

    def on_dispatch(self) -> None:
        pass

    def learn(self, matured: List[Tuple[np.ndarray, float]]) -> None:
        if not matured:
            return
        if self.frozen:
            logger.debug(f"Frozen policy '{self.name}' ignores {len(matured)} training pairs")
            return
        pairs = []
        for x, y in matured:
            x = x.as_array() if hasattr(x, "as_array") else np.asarray(x, dtype=np.float64)
            if not (np.all(np.isfinite(x)) and np.isfinite(y)):
                raise ModelError(f"Training pair carries non-finite values: x={x}, y={y}")
            pairs.append((x, float(y)))

        if self.bundle.ol is not None:
            for x, y in pairs:
                with self.timings.measure(StageTimings.ONLINE_UPDATE):
                    rls_update(self.bundle.ol, transform_for_linear(x), y)
            self._snapshot_weights()

        if self.bundle.rf is not None:
            self.training_data.extend(pairs)
            self.pairs_since_refit += len(pairs)
            if self.pairs_since_refit >= self.batch_size:
                self.refit()

    def refit(self) -> None:
        """Retrains the forest on every collected pair."""
        if not self.training_data:
            return
        params: ForestParams = self.bundle.rf.params
        seed = derive_seed(self.bundle.rng_seed, self.refit_count)
        with self.timings.measure(StageTimings.OFFLINE_UPDATE):
            self.bundle.rf = rf_fit(self.training_data, params, seed)
        self.refit_count += 1
        self.pairs_since_refit = 0
        self.importance_history.append({
            "refit": self.refit_count,
            "examples": len(self.training_data),
            "importance": rf_feature_importance(self.bundle.rf).tolist(),
        })
        logger.info(f"Refitted forest #{self.refit_count} on {len(self.training_data)} examples")

    def _snapshot_weights(self) -> None:
        if self.bundle.ol is not None:
            self.weight_history.append({"updates": self.bundle.ol.t, "weights": self.bundle.ol.w.tolist()})


def make_policy(kind: PolicyKind, rng_seed: int, lam: float = 1.0,
                forest_params: Optional[ForestParams] = None, batch_size: int = 16,
                bundle: Optional[ModelBundle] = None, frozen: bool = False,
                timings: Optional[StageTimings] = None,
                training_data: Optional[List[Tuple[np.ndarray, float]]] = None) -> SeedSchedulingPolicy:
    """
    Builds the policy for `kind`. Learned policies start from `bundle` when one
    is given (reuse and transfer), otherwise from a freshly initialized model.
    """
    if kind is PolicyKind.RANDOM:
        return RandomPolicy(rng_seed)
    if kind is PolicyKind.HEURISTIC_AFL:
        return HeuristicAFLPolicy()
    if bundle is None:
        bundle = new_bundle(kind.model_kind, lam, forest_params or ForestParams(), rng_seed)
    return LearnedPolicy(kind, bundle, batch_size=batch_size, frozen=frozen, timings=timings,
                         training_data=training_data)
