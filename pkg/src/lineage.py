"""
Seed lineage and descendant-tree labels.

Seeds are linked to their parents by explicit ids. Seeds selected for concolic
execution become roots; the regression label of a root is the size of its
descendant tree inside a time window after selection.
"""
import logging
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Set, Tuple, Union

import numpy as np
import pandas as pd

from src.features import FEATURE_NAMES, FeatureVector
from src.program_model import BranchId
from src.scheduling_interface import LineageError

logger = logging.getLogger(__name__)

SeedId = int
Tick = int


class SeedOrigin(str, Enum):
    INITIAL = "Initial"
    FUZZER_MUTATION = "FuzzerMutation"
    CONCOLIC_IMPORT = "ConcolicImport"


@dataclass(frozen=True)
class Seed:
    """One input in the fuzzer queue, identified by its SeedId and linked to its parent."""

    id: SeedId
    parent: Optional[SeedId]
    origin: SeedOrigin
    size: int
    trace: Tuple[BranchId, ...]
    first_new_cov: int = 0
    created_at: Tick = 0

    def __post_init__(self):
        if (self.parent is None) != (self.origin is SeedOrigin.INITIAL):
            raise LineageError(
                f"Seed {self.id}: parent must be absent exactly for Initial seeds "
                f"(origin={self.origin.value}, parent={self.parent})")
        if self.size < 0:
            raise LineageError(f"Seed {self.id}: size must be non-negative, got {self.size}")
        if self.first_new_cov not in (0, 1):
            raise LineageError(f"Seed {self.id}: first_new_cov must be 0 or 1")


@dataclass
class LineageIndex:
    """
    Parent links of every recorded seed plus the set of selected roots.

    Single-writer per campaign.
    """

    children: Dict[SeedId, List[SeedId]] = field(default_factory=dict)
    parents: Dict[SeedId, Optional[SeedId]] = field(default_factory=dict)
    created_at: Dict[SeedId, Tick] = field(default_factory=dict)
    roots: Set[SeedId] = field(default_factory=set)

    def __contains__(self, seed_id: SeedId) -> bool:
        return seed_id in self.parents

    def __len__(self) -> int:
        return len(self.parents)

    def mark_root(self, seed_id: SeedId) -> None:
        """Marks a recorded seed as selected for concolic execution."""
        if seed_id not in self.parents:
            raise LineageError(f"Cannot select unknown seed {seed_id} as a root.")
        self.roots.add(seed_id)


def record_seed(index: LineageIndex, seed: Seed) -> None:
    """
    Records a seed and links it under its parent.

    Raises:
        LineageError: On a duplicate id, an unknown parent, or a child older than its parent.
    """
    if seed.id in index.parents:
        raise LineageError(f"Duplicate seed id {seed.id}.")
    if seed.parent is not None:
        if seed.parent not in index.parents:
            raise LineageError(f"Seed {seed.id} names unknown parent {seed.parent}.")
        if seed.created_at < index.created_at[seed.parent]:
            raise LineageError(
                f"Seed {seed.id} created at tick {seed.created_at} before its parent "
                f"{seed.parent} (tick {index.created_at[seed.parent]}).")
        index.children[seed.parent].append(seed.id)
    index.parents[seed.id] = seed.parent
    index.created_at[seed.id] = seed.created_at
    index.children[seed.id] = []


def descendant_tree_size(index: LineageIndex, root: SeedId, cutoff: Tick,
                         since: Optional[Tick] = None) -> int:
    """
    Counts the nodes of the descendant tree rooted at `root`.

    The root is always counted. A descendant counts when it was created at or
    before `cutoff` (and, with `since`, no earlier than `since`). Nodes older
    than `since` are skipped but still walked, so their younger children count.
    Other roots bound the tree: their subtrees belong to their own labels.

    Raises:
        LineageError: If `root` is not a selected root.
    """
    if root not in index.roots:
        raise LineageError(f"Unknown root {root}.")
    count = 1
    queue = deque(index.children[root])
    while queue:
        node = queue.popleft()
        if node in index.roots:
            continue
        created = index.created_at[node]
        if created > cutoff:
            # Descendants are never older than their ancestors
            continue
        if since is None or created >= since:
            count += 1
        queue.extend(index.children[node])
    return count


@dataclass(frozen=True)
class PendingLabel:
    """A dispatched root waiting for its label window to close."""

    root: SeedId
    features_at_selection: FeatureVector
    selected_at: Tick
    matures_at: Tick

    @classmethod
    def open(cls, root: SeedId, features: FeatureVector, selected_at: Tick, window: int) -> "PendingLabel":
        if window < 1:
            raise LineageError(f"Label window must be at least 1 tick, got {window}")
        return cls(root, features, selected_at, selected_at + window)


def mature_labels(pending: List[PendingLabel], index: LineageIndex,
                  now: Tick) -> List[Tuple[FeatureVector, float]]:
    """
    Emits (features_at_selection, label) for every pending entry with matures_at <= now.

    Matured entries are removed from `pending` in place; the rest keep their
    selection order.

    A label counts the root plus the descendants created in the window
    [selected_at, now]. Descendants the root already had before it was
    selected are left out, so the label measures what the concolic run and
    the fuzzing after it produced, not the seed's history.
    """
    matured: List[Tuple[FeatureVector, float]] = []
    retained: List[PendingLabel] = []
    for entry in pending:
        if entry.matures_at <= now:
            label = descendant_tree_size(index, entry.root, cutoff=now, since=entry.selected_at)
            matured.append((entry.features_at_selection, float(label)))
        else:
            retained.append(entry)
    pending[:] = retained
    if matured:
        logger.debug(f"Matured {len(matured)} labels at tick {now}, {len(retained)} still pending")
    return matured


class TrainingLog:
    """Append-only log of training pairs: the 10 feature columns, the label and the tick it matured."""

    COLUMNS = FEATURE_NAMES + ["label", "tick"]

    def __init__(self):
        self._rows: List[tuple] = []

    def __len__(self) -> int:
        return len(self._rows)

    def append(self, features: FeatureVector, label: float, tick: Tick) -> None:
        self._rows.append(tuple(int(v) for v in features.as_array()) + (float(label), int(tick)))

    def extend(self, pairs: List[Tuple[FeatureVector, float]], tick: Tick) -> None:
        for features, label in pairs:
            self.append(features, label, tick)

    def append_log(self, other: "TrainingLog") -> None:
        self._rows.extend(other._rows)

    def copy(self) -> "TrainingLog":
        log = TrainingLog()
        log._rows = list(self._rows)
        return log

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self._rows, columns=self.COLUMNS)

    def pairs(self) -> List[Tuple[np.ndarray, float]]:
        """Logged (raw feature vector, label) pairs in append order."""
        return [(np.array(row[:-2], dtype=np.float64), float(row[-2])) for row in self._rows]

    @classmethod
    def read_csv(cls, path: Union[str, Path]) -> "TrainingLog":
        path = Path(path)
        try:
            frame = pd.read_csv(path)
        except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
            raise LineageError(f"Cannot read training log {path}: {e}") from e
        if list(frame.columns) != cls.COLUMNS:
            raise LineageError(f"Training log {path} has columns {list(frame.columns)}, expected {cls.COLUMNS}")
        log = cls()
        for row in frame.itertuples(index=False):
            log._rows.append(tuple(int(v) for v in row[:-2]) + (float(row[-2]), int(row[-1])))
        return log

    def write_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False)
        logger.info(f"Wrote {len(self)} training pairs to {path}")
        return path
