import numpy as np
import pytest

from src.learning.forest import (
    LEAF,
    ForestParams,
    RandomForestModel,
    RegressionTree,
    rf_feature_importance,
    rf_fit,
    rf_predict,
)
from src.scheduling_interface import ModelError


def constant_tree(value, d=10):
    return RegressionTree(
        feature=np.array([LEAF]), threshold=np.array([0.0]), left=np.array([LEAF]), right=np.array([LEAF]),
        value=np.array([value]), n_samples=np.array([1]), importance=np.zeros(d),
    )


def random_pairs(n=60, d=10, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    y = X[:, 0] * 3.0 + X[:, 1] ** 2 + rng.normal(scale=0.1, size=n)
    return list(zip(X, y))


def test_constant_targets_predict_constant():
    rng = np.random.default_rng(1)
    data = [(x, 4.25) for x in rng.normal(size=(30, 10))]
    forest = rf_fit(data, ForestParams(n_trees=7), rng_seed=3)
    predictions = rf_predict(forest, rng.normal(size=(20, 10)))
    assert np.all(predictions == 4.25)


def test_single_full_tree_memorizes():
    data = random_pairs(n=40)
    params = ForestParams(n_trees=1, bootstrap=False, min_samples_leaf=1, features_per_split=10)
    forest = rf_fit(data, params, rng_seed=0)
    X = np.array([x for x, _ in data])
    y = np.array([label for _, label in data])
    assert np.array_equal(rf_predict(forest, X), y)


def test_colocated_points_predict_mean():
    x = np.ones(10)
    params = ForestParams(n_trees=1, bootstrap=False, min_samples_leaf=1)
    forest = rf_fit([(x, 1.0), (x, 3.0)], params, rng_seed=0)
    assert rf_predict(forest, x) == pytest.approx(2.0)


def test_forest_averages_trees():
    params = ForestParams(n_trees=2)
    assert rf_predict(RandomForestModel([constant_tree(3.0)], params, 0, 10), np.zeros(10)) == 3.0
    forest = RandomForestModel([constant_tree(2.0), constant_tree(4.0)], params, 0, 10)
    assert rf_predict(forest, np.zeros(10)) == 3.0


def test_fit_is_deterministic():
    data = random_pairs()
    first = rf_fit(data, ForestParams(n_trees=10), rng_seed=5)
    second = rf_fit(data, ForestParams(n_trees=10), rng_seed=5)
    for a, b in zip(first.trees, second.trees):
        assert np.array_equal(a.feature, b.feature)
        assert np.array_equal(a.threshold, b.threshold)
        assert np.array_equal(a.value, b.value)
    query_rows = np.random.default_rng(2).normal(size=(25, 10))
    assert np.array_equal(rf_predict(first, query_rows), rf_predict(second, query_rows))


def test_tree_limits_are_respected():
    params = ForestParams(n_trees=4, max_depth=3, min_samples_leaf=5)
    forest = rf_fit(random_pairs(n=80), params, rng_seed=1)
    for tree in forest.trees:
        assert tree.depth <= 3
        leaves = tree.feature == LEAF
        assert np.all(tree.n_samples[leaves] >= 5)


def test_importance_single_signal():
    rng = np.random.default_rng(4)
    X = np.zeros((50, 10))
    X[:, 0] = rng.normal(size=50)
    data = [(x, float(x[0])) for x in X]
    forest = rf_fit(data, ForestParams(n_trees=10, features_per_split=10), rng_seed=2)
    importance = rf_feature_importance(forest)
    assert importance[0] > 0.99


def test_importance_without_splits_is_zero():
    data = [(x, 1.0) for x in np.random.default_rng(0).normal(size=(10, 10))]
    forest = rf_fit(data, ForestParams(n_trees=3), rng_seed=0)
    assert np.array_equal(rf_feature_importance(forest), np.zeros(10))


def test_importance_is_normalized():
    forest = rf_fit(random_pairs(n=100), ForestParams(n_trees=20), rng_seed=8)
    importance = rf_feature_importance(forest)
    assert np.all(importance >= 0)
    assert abs(importance.sum() - 1.0) < 1e-9


def test_fit_rejects_bad_data():
    with pytest.raises(ModelError):
        rf_fit([], ForestParams(), rng_seed=0)
    with pytest.raises(ModelError):
        rf_fit([(np.array([1.0, np.inf]), 1.0)], ForestParams(), rng_seed=0)
    with pytest.raises(ModelError):
        rf_fit([(np.ones(2), 1.0), (np.ones(3), 2.0)], ForestParams(), rng_seed=0)


def test_unfitted_forest_errors():
    forest = RandomForestModel(trees=[], params=ForestParams(), rng_seed=0, dimension=10)
    with pytest.raises(ModelError):
        rf_predict(forest, np.zeros(10))
    with pytest.raises(ModelError):
        rf_feature_importance(forest)


def test_predict_dimension_mismatch():
    forest = rf_fit(random_pairs(n=20), ForestParams(n_trees=2), rng_seed=0)
    with pytest.raises(ModelError):
        rf_predict(forest, np.zeros(4))


def test_predictions_stay_within_leaf_values():
    data = random_pairs(n=80, seed=3)
    forest = rf_fit(data, ForestParams(n_trees=15), rng_seed=5)
    leaves = np.concatenate([tree.value[tree.feature == LEAF] for tree in forest.trees])
    X = np.random.default_rng(9).normal(scale=4.0, size=(200, 10))
    predictions = rf_predict(forest, X)
    assert np.all(predictions >= leaves.min() - 1e-12)
    assert np.all(predictions <= leaves.max() + 1e-12)

    labels = np.array([label for _, label in data])
    assert labels.min() - 1e-12 <= leaves.min() <= leaves.max() <= labels.max() + 1e-12
