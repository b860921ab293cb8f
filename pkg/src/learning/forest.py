"""
Random-forest regression built from CART trees.

Trees are stored as flat node arrays (feature < 0 marks a leaf) so batch
prediction walks all rows of a matrix level by level. Splits maximize the
decrease of the sum of squared errors over a random feature subset per node.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.scheduling_interface import ModelError

logger = logging.getLogger(__name__)

LEAF = -1


class ForestParams(BaseModel):
    """Hyperparameters of the random forest."""

    model_config = ConfigDict(frozen=True)

    n_trees: int = Field(default=100, ge=1)
    max_depth: Optional[int] = Field(default=None, ge=1)
    min_samples_leaf: int = Field(default=2, ge=1)
    features_per_split: int = Field(default=4, ge=1)
    bootstrap: bool = True


@dataclass
class RegressionTree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    # Sum of SSE decreases per feature divided by the training size of the tree
    importance: np.ndarray

    @property
    def node_count(self) -> int:
        return int(self.feature.shape[0])

    @property
    def depth(self) -> int:
        depths = np.zeros(self.node_count, dtype=np.int64)
        for node in range(self.node_count):
            if self.feature[node] != LEAF:
                depths[self.left[node]] = depths[node] + 1
                depths[self.right[node]] = depths[node] + 1
        return int(depths.max())

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] != LEAF
        while active.any():
            rows = np.nonzero(active)[0]
            current = node[rows]
            go_left = X[rows, self.feature[current]] <= self.threshold[current]
            node[rows] = np.where(go_left, self.left[current], self.right[current])
            active = self.feature[node] != LEAF
        return self.value[node]


@dataclass
class RandomForestModel:
    trees: List[RegressionTree]
    params: ForestParams
    rng_seed: int
    dimension: int
    n_train: int = 0

    @property
    def fitted(self) -> bool:
        return len(self.trees) > 0


class _TreeBuilder:
    def __init__(self, params: ForestParams, rng: np.random.Generator, dimension: int):
        self.params = params
        self.rng = rng
        self.dimension = dimension
        self.k = min(params.features_per_split, dimension)
        self.feature: List[int] = []
        self.threshold: List[float] = []
        self.left: List[int] = []
        self.right: List[int] = []
        self.value: List[float] = []
        self.n_samples: List[int] = []
        self.importance = np.zeros(dimension)

    def _new_node(self, y: np.ndarray) -> int:
        self.feature.append(LEAF)
        self.threshold.append(0.0)
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.value.append(float(y[0]) if np.all(y == y[0]) else float(np.mean(y)))
        self.n_samples.append(int(y.shape[0]))
        return len(self.feature) - 1

    def _best_split(self, X: np.ndarray, y: np.ndarray) -> Tuple[int, float, float]:
        n = y.shape[0]
        leaf = self.params.min_samples_leaf
        parent_sse = float(np.sum((y - y.mean()) ** 2))
        best = (LEAF, 0.0, 0.0)
        for f in self.rng.choice(self.dimension, size=self.k, replace=False):
            order = np.argsort(X[:, f], kind="stable")
            xs, ys = X[order, f], y[order]
            csum, csq = np.cumsum(ys), np.cumsum(ys * ys)
            total, total_sq = csum[-1], csq[-1]
            # Split i puts rows [0, i) left
            i = np.arange(leaf, n - leaf + 1)
            i = i[(i > 0) & (i < n)]
            i = i[xs[i - 1] < xs[i]]
            if i.size == 0:
                continue
            left_sum, left_sq = csum[i - 1], csq[i - 1]
            right_sum, right_sq = total - left_sum, total_sq - left_sq
            sse = (left_sq - left_sum ** 2 / i) + (right_sq - right_sum ** 2 / (n - i))
            decrease = parent_sse - sse
            j = int(np.argmax(decrease))
            if decrease[j] > best[2]:
                cut = i[j]
                best = (int(f), float((xs[cut - 1] + xs[cut]) / 2.0), float(decrease[j]))
        return best

    def build(self, X: np.ndarray, y: np.ndarray) -> RegressionTree:
        root = self._new_node(y)
        stack = [(root, np.arange(y.shape[0]), 0)]
        max_depth = self.params.max_depth
        while stack:
            node, rows, depth = stack.pop()
            ys = y[rows]
            if rows.size < 2 * self.params.min_samples_leaf:
                continue
            if max_depth is not None and depth >= max_depth:
                continue
            if np.all(ys == ys[0]):
                continue
            f, threshold, decrease = self._best_split(X[rows], ys)
            if f == LEAF or decrease <= 0:
                continue
            goes_left = X[rows, f] <= threshold
            left_rows, right_rows = rows[goes_left], rows[~goes_left]
            left, right = self._new_node(y[left_rows]), self._new_node(y[right_rows])
            self.feature[node], self.threshold[node] = f, threshold
            self.left[node], self.right[node] = left, right
            self.importance[f] += decrease
            stack.append((right, right_rows, depth + 1))
            stack.append((left, left_rows, depth + 1))
        return RegressionTree(
            feature=np.array(self.feature, dtype=np.int64),
            threshold=np.array(self.threshold, dtype=np.float64),
            left=np.array(self.left, dtype=np.int64),
            right=np.array(self.right, dtype=np.int64),
            value=np.array(self.value, dtype=np.float64),
            n_samples=np.array(self.n_samples, dtype=np.int64),
            importance=self.importance / y.shape[0],
        )


def _as_arrays(data: Sequence) -> Tuple[np.ndarray, np.ndarray]:
    try:
        X = np.array([np.asarray(x, dtype=np.float64) for x, _ in data], dtype=np.float64)
    except ValueError as e:
        raise ModelError(f"Training vectors must share one dimension: {e}") from e
    y = np.array([float(label) for _, label in data], dtype=np.float64)
    return X, y


def rf_fit(data: Sequence, params: ForestParams, rng_seed: int) -> RandomForestModel:
    """
    Trains a random forest on (x, y) pairs.

    Each tree gets its own generator spawned from `rng_seed`, used for the
    bootstrap resample and the per-node feature subsets, so the forest is
    deterministic given the data and the seed.

    Raises:
        ModelError: If `data` is empty or holds non-finite values.
    """
    if len(data) == 0:
        raise ModelError("Cannot fit a random forest on an empty dataset.")
    X, y = _as_arrays(data)
    if X.ndim != 2:
        raise ModelError("Training vectors must be one-dimensional.")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ModelError("Random forest training data must be finite.")
    n, d = X.shape
    trees = []
    for child in np.random.SeedSequence(rng_seed).spawn(params.n_trees):
        rng = np.random.default_rng(child)
        rows = rng.integers(0, n, size=n) if params.bootstrap else np.arange(n)
        trees.append(_TreeBuilder(params, rng, d).build(X[rows], y[rows]))
    logger.debug(f"Fitted {params.n_trees} trees on {n} examples")
    return RandomForestModel(trees=trees, params=params, rng_seed=rng_seed, dimension=d, n_train=n)


def rf_predict(m: RandomForestModel, x) -> Union[float, np.ndarray]:
    """
    Mean of the tree predictions for a vector, or per row for a matrix.

    Raises:
        ModelError: If the forest is unfitted or the dimension does not match.
    """
    if not m.fitted:
        raise ModelError("Random forest has not been fitted yet.")
    X = np.asarray(x, dtype=np.float64)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != m.dimension:
        raise ModelError(f"Expected {m.dimension} features, got {X.shape[1]}")
    total = np.zeros(X.shape[0])
    for tree in m.trees:
        total += tree.predict(X)
    mean = total / len(m.trees)
    return float(mean[0]) if single else mean


def rf_feature_importance(m: Optional[RandomForestModel]) -> np.ndarray:
    """
    Mean decrease in impurity per feature, normalized to sum to 1.

    A forest without any split returns the zero vector.

    Raises:
        ModelError: If the forest is unfitted.
    """
    if m is None or not m.fitted:
        raise ModelError("Feature importance requires a fitted random forest.")
    importance = np.mean([tree.importance for tree in m.trees], axis=0)
    total = importance.sum()
    if total <= 0:
        return np.zeros(m.dimension)
    return importance / total
