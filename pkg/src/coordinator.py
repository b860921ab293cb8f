"""
The scheduling coordinator: ranks the fuzzer queue with the active policy,
dispatches the top seeds to the concolic executor, keeps their pending labels
and routes matured labels back into the policy.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from src.features import FeatureVector, FuzzerStateView, extract_feature_matrix, extract_features
from src.lineage import LineageIndex, PendingLabel, Seed, SeedId, TrainingLog, mature_labels
from src.program_model import ProgramModel
from src.scheduling_interface import ConfigError, SchedulerError, SeedSchedulingPolicy
from src.utils import StageTimings

logger = logging.getLogger(__name__)


@dataclass
class DispatchRecord:
    seed: SeedId
    predicted_utility: float
    tick: int
    features: FeatureVector
    policy: str
    label: Optional[float] = None


def _score_queue(policy: SeedSchedulingPolicy, queue: Sequence[Seed], model: ProgramModel,
                 state: FuzzerStateView, timings: Optional[StageTimings]) -> Tuple[np.ndarray, np.ndarray]:
    features = np.zeros((0, 0))
    if policy.needs_features:
        if timings is not None:
            with timings.measure(StageTimings.FEATURE_EXTRACTION, len(queue)):
                features = extract_feature_matrix(queue, model, state)
        else:
            features = extract_feature_matrix(queue, model, state)
    scores = np.asarray(policy.score(queue, features), dtype=np.float64)
    if scores.shape != (len(queue),):
        raise SchedulerError(f"Policy '{policy.name}' returned {scores.shape} scores for {len(queue)} seeds")
    return scores, features


def _order(ids: np.ndarray, scores: np.ndarray) -> np.ndarray:
    # Descending score, ties to the lower SeedId
    return np.lexsort((ids, -scores))


def rank_queue(policy: SeedSchedulingPolicy, queue: Sequence[Seed], model: ProgramModel,
               state: FuzzerStateView) -> List[Tuple[SeedId, float]]:
    """
    Orders a queue snapshot by the policy's scores, highest first, ties broken by lower SeedId.

    Pure with respect to the policy state: ranking twice without an intervening
    dispatch or update returns the same order.
    """
    if not queue:
        return []
    scores, _ = _score_queue(policy, queue, model, state, None)
    ids = np.array([s.id for s in queue], dtype=np.int64)
    return [(int(ids[i]), float(scores[i])) for i in _order(ids, scores)]


class Coordinator:
    """
    Per-campaign scheduling state: which seeds were dispatched, which labels are
    pending, the dispatch log and the training log. Single-threaded.
    """

    def __init__(self, policy: SeedSchedulingPolicy, model: ProgramModel, k: int = 1,
                 label_window: int = 5, timings: Optional[StageTimings] = None):
        if k < 1:
            raise ConfigError(f"Dispatch count k must be at least 1, got {k}")
        if label_window < 1:
            raise ConfigError(f"Label window must be at least 1 tick, got {label_window}")
        self.policy = policy
        self.model = model
        self.k = k
        self.label_window = label_window
        self.timings = timings if timings is not None else StageTimings()
        self.dispatched: set = set()
        self.pending: List[PendingLabel] = []
        self.dispatch_log: List[DispatchRecord] = []
        self._log_by_seed: Dict[SeedId, DispatchRecord] = {}
        self.training_log = TrainingLog()
        self.labels_emitted = 0

    def dispatch(self, queue: Sequence[Seed], state: FuzzerStateView, lineage: LineageIndex,
                 tick: int) -> List[DispatchRecord]:
        """
        Selects the top-k seeds not dispatched before, marks them as lineage
        roots and opens a pending label for each.

        Returns:
            One DispatchRecord per selected seed, best first; [] when no seed is eligible.
        """
        eligible = [s for s in queue if s.id not in self.dispatched]
        if not eligible:
            logger.debug(f"Tick {tick}: no eligible seeds to dispatch")
            return []
        scores, features = _score_queue(self.policy, eligible, self.model, state, self.timings)
        ids = np.array([s.id for s in eligible], dtype=np.int64)
        chosen = _order(ids, scores)[: self.k]

        records = []
        for i in chosen:
            seed = eligible[i]
            if features.size:
                vector = FeatureVector.from_array(features[i])
            else:
                with self.timings.measure(StageTimings.FEATURE_EXTRACTION):
                    vector = extract_features(seed, self.model, state)
            record = DispatchRecord(seed=seed.id, predicted_utility=float(scores[i]), tick=tick,
                                    features=vector, policy=self.policy.name)
            self.dispatched.add(seed.id)
            lineage.mark_root(seed.id)
            self.pending.append(PendingLabel.open(seed.id, vector, tick, self.label_window))
            self.dispatch_log.append(record)
            self._log_by_seed[seed.id] = record
            records.append(record)
            logger.debug(f"Tick {tick}: dispatched seed {seed.id} (score {record.predicted_utility:.4f})")
        self.policy.on_dispatch()
        return records

    def mature(self, lineage: LineageIndex, now: int) -> List[Tuple[FeatureVector, float]]:
        """Emits the labels whose window closed by `now` and fills them into the dispatch log."""
        due = [p.root for p in self.pending if p.matures_at <= now]
        matured = mature_labels(self.pending, lineage, now)
        for root, (_, label) in zip(due, matured):
            self._log_by_seed[root].label = label
        self.training_log.extend(matured, now)
        self.labels_emitted += len(matured)
        return matured

    def feedback(self, matured: List[Tuple[FeatureVector, float]]) -> None:
        """Trains the policy on matured pairs; non-learning policies only log."""
        if not matured:
            return
        if not self.policy.learns:
            logger.debug(f"Policy '{self.policy.name}' does not learn; {len(matured)} pairs logged only")
            return
        self.policy.learn(matured)

    def accounting(self) -> Dict[str, int]:
        """Campaign-end balance: every dispatch is either labeled or still pending."""
        counts = {
            "dispatches": len(self.dispatch_log),
            "labels": self.labels_emitted,
            "pending": len(self.pending),
        }
        if counts["dispatches"] != counts["labels"] + counts["pending"]:
            raise SchedulerError(f"Dispatch accounting mismatch: {counts}")
        return counts

    def dispatch_frame(self, program: str = "") -> pd.DataFrame:
        return dispatch_log_frame(self.dispatch_log, program)


DISPATCH_LOG_COLUMNS = ["tick", "seed", "policy", "program", "score", "label"]


def dispatch_log_frame(records: Sequence[DispatchRecord], program: str = "") -> pd.DataFrame:
    """One row per dispatch; `label` stays empty while the root is pending."""
    rows = [(r.tick, r.seed, r.policy, program, r.predicted_utility, r.label) for r in records]
    return pd.DataFrame(rows, columns=DISPATCH_LOG_COLUMNS)


def write_dispatch_log(records: Sequence[DispatchRecord], path: Union[str, Path], program: str = "") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dispatch_log_frame(records, program).to_csv(path, index=False)
    logger.info(f"Wrote dispatch log ({len(records)} records) to {path}")
    return path
