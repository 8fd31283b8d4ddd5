# tests/test_forest.py
import numpy as np
import pytest

from analyzers.metrics import roc_auc
from core.datasets import Task
from models.forest import Forest, ForestConfig, fit_forest, fit_forest_matrix, predict_forest, predict_matrix


def _two_clusters(n, seed):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, size=n)
    X = (rng.random((n, 40)) < 0.1).astype(float)
    # bits 0-4 fire mostly for positives, bits 5-9 for negatives
    X[:, 0:5] = (rng.random((n, 5)) < np.where(y[:, None] == 1, 0.8, 0.05))
    X[:, 5:10] = (rng.random((n, 5)) < np.where(y[:, None] == 0, 0.8, 0.05))
    return X, y.astype(float)


def test_separates_planted_clusters():
    X, y = _two_clusters(200, seed=1)
    X_test, y_test = _two_clusters(100, seed=2)
    trees = fit_forest_matrix(X, y, Task.BINARY_CLASSIFICATION, ForestConfig(n_trees=30, seed=0))
    scores = predict_matrix(Forest(trees=trees, task=Task.BINARY_CLASSIFICATION), X_test)
    assert np.all((scores >= 0.0) & (scores <= 1.0))
    assert roc_auc(y_test, scores) >= 0.9


def test_memorizes_distinct_training_rows_without_bootstrap():
    X = np.eye(8)
    y = np.arange(8, dtype=float)
    config = ForestConfig(n_trees=3, bootstrap=False, features_per_split='all', seed=0)
    forest = Forest(trees=fit_forest_matrix(X, y, Task.REGRESSION, config), task=Task.REGRESSION)
    assert predict_matrix(forest, X) == pytest.approx(y)


def test_deterministic_given_seed(small_dataset):
    config = ForestConfig(n_trees=10, seed=3)
    a = fit_forest(small_dataset, config, n_bits=256)
    b = fit_forest(small_dataset, config, n_bits=256)
    mol = small_dataset.graphs[0]
    assert predict_forest(a, mol) == predict_forest(b, mol)
    assert all(np.array_equal(ta.feature, tb.feature) for ta, tb in zip(a.trees, b.trees))


def test_max_depth_zero_predicts_mean():
    X = np.eye(4)
    y = np.array([0.0, 1.0, 2.0, 3.0])
    config = ForestConfig(n_trees=1, max_depth=0, bootstrap=False)
    forest = Forest(trees=fit_forest_matrix(X, y, Task.REGRESSION, config), task=Task.REGRESSION)
    assert predict_matrix(forest, X) == pytest.approx([1.5] * 4)


def test_config_validation():
    with pytest.raises(ValueError):
        ForestConfig(n_trees=0)
    with pytest.raises(ValueError):
        ForestConfig(features_per_split='log2')
    with pytest.raises(ValueError):
        fit_forest_matrix(np.ones((1, 3)), np.ones(1), Task.REGRESSION, ForestConfig())


@pytest.mark.parametrize('task, constant', [(Task.REGRESSION, 2.5), (Task.BINARY_CLASSIFICATION, 1.0)])
def test_constant_targets_grow_single_leaf_trees(task, constant):
    X, _ = _two_clusters(50, seed=4)
    y = np.full(50, constant)
    trees = fit_forest_matrix(X, y, task, ForestConfig(n_trees=5, seed=0))
    assert [tree.n_nodes for tree in trees] == [1] * 5
    assert predict_matrix(Forest(trees=trees, task=task), X) == pytest.approx([constant] * 50)


def test_regression_predictions_stay_within_target_range():
    X, _ = _two_clusters(120, seed=5)
    y = np.random.default_rng(5).normal(loc=3.0, scale=2.0, size=120)
    X_test, _ = _two_clusters(80, seed=6)
    for config in (ForestConfig(n_trees=20, seed=1), ForestConfig(n_trees=5, max_depth=2, seed=2)):
        forest = Forest(trees=fit_forest_matrix(X, y, Task.REGRESSION, config), task=Task.REGRESSION)
        predictions = predict_matrix(forest, np.vstack([X, X_test]))
        assert np.all(predictions >= y.min() - 1e-12)
        assert np.all(predictions <= y.max() + 1e-12)
