"""
Utility feature extraction.
Computes the 10-dimensional feature vector of a seed from its trace, the
program's static annotations and the live fuzzer state. Extraction only reads
annotations, coverage and seed metadata, never the program name or seed
content, so learned models stay seed- and program-agnostic.
"""
import logging
from dataclasses import astuple, dataclass, fields
from typing import TYPE_CHECKING, Iterable, List, Sequence

import numpy as np
import pandas as pd

from src.config import FEATURE_DIMENSION
from src.coverage import CoverageStore, undiscovered_neighbors
from src.program_model import ProgramModel
from src.scheduling_interface import ProgramModelError

if TYPE_CHECKING:
    from src.lineage import Seed

logger = logging.getLogger(__name__)

FEATURE_NAMES = [
    "reachable_labels",
    "reached_labels",
    "undiscovered_neighbors",
    "external_calls",
    "cmp_count",
    "indirect_calls",
    "path_length",
    "input_size",
    "first_new_cov",
    "queue_size",
]

FIRST_NEW_COV_INDEX = FEATURE_NAMES.index("first_new_cov")


@dataclass(frozen=True)
class FeatureVector:
    """Utility features of one seed, in the fixed FEATURE_NAMES order."""

    reachable_labels: int
    reached_labels: int
    undiscovered_neighbors: int
    external_calls: int
    cmp_count: int
    indirect_calls: int
    path_length: int
    input_size: int
    first_new_cov: int
    queue_size: int

    def __post_init__(self):
        if min(astuple(self)) < 0:
            raise ValueError(f"Feature values must be non-negative: {self}")
        if self.first_new_cov not in (0, 1):
            raise ValueError(f"first_new_cov must be 0 or 1, got {self.first_new_cov}")

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=np.float64)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "FeatureVector":
        if len(values) != len(FEATURE_NAMES):
            raise ValueError(f"Expected {len(FEATURE_NAMES)} feature values, got {len(values)}")
        return cls(*(int(round(v)) for v in values))


def check_feature_layout(names: Sequence[str] = FEATURE_NAMES) -> None:
    """Raises RuntimeError unless FeatureVector fields and `names` agree in order and dimension."""
    declared = [f.name for f in fields(FeatureVector)]
    if declared != list(names) or len(declared) != FEATURE_DIMENSION:
        raise RuntimeError(f"Feature layout mismatch: fields {declared}, names {list(names)}, "
                           f"dimension {FEATURE_DIMENSION}.")


check_feature_layout()


@dataclass(frozen=True)
class FuzzerStateView:
    """Read-only snapshot of the fuzzer state at query time."""

    queue_size: int
    coverage: CoverageStore


def extract_features(seed: "Seed", model: ProgramModel, state: FuzzerStateView) -> FeatureVector:
    """
    Computes the utility features of a seed.

    Label features sum over distinct trace branches, instruction-count
    features and path_length over the raw (non-deduplicated) trace.

    Raises:
        ProgramModelError: If the trace is empty or holds an invalid BranchId.
    """
    trace = model.check_trace(seed.trace)
    if trace.size == 0:
        raise ProgramModelError(f"Seed {seed.id} has an empty trace.")
    distinct = np.unique(trace)
    return FeatureVector(
        reachable_labels=int(model.reachable_labels[distinct].sum()),
        reached_labels=int(model.local_labels[distinct].sum()),
        undiscovered_neighbors=undiscovered_neighbors(state.coverage, trace),
        external_calls=int(model.external_calls[trace].sum()),
        cmp_count=int(model.cmp_counts[trace].sum()),
        indirect_calls=int(model.indirect_calls[trace].sum()),
        path_length=int(trace.size),
        input_size=int(seed.size),
        first_new_cov=int(seed.first_new_cov),
        queue_size=int(state.queue_size),
    )


def extract_feature_matrix(seeds: Sequence["Seed"], model: ProgramModel, state: FuzzerStateView) -> np.ndarray:
    """Raw feature matrix of shape (len(seeds), 10), one extract_features row per seed."""
    matrix = np.zeros((len(seeds), len(FEATURE_NAMES)), dtype=np.float64)
    for row, seed in enumerate(seeds):
        matrix[row] = extract_features(seed, model, state).as_array()
    return matrix


def transform_for_linear(v) -> np.ndarray:
    """
    Scales features for the linear model: log(1 + x) on every count field,
    first_new_cov passed through. Accepts a FeatureVector, a vector or a matrix
    of raw features (rows in FEATURE_NAMES order).
    """
    raw = v.as_array() if isinstance(v, FeatureVector) else np.asarray(v, dtype=np.float64)
    out = np.log1p(raw)
    out[..., FIRST_NEW_COV_INDEX] = raw[..., FIRST_NEW_COV_INDEX]
    return out


def features_to_frame(vectors: Iterable[FeatureVector]) -> pd.DataFrame:
    """Feature vectors as a DataFrame whose columns follow FEATURE_NAMES (the CSV header)."""
    rows: List[tuple] = [astuple(v) for v in vectors]
    return pd.DataFrame(rows, columns=FEATURE_NAMES)
