# models/forest.py
"""
Random-forest baseline over binary fingerprint features.

CART trees split on one bit (0 goes left, 1 goes right), grown on bootstrap
samples with per-split feature subsampling. Regression trees minimize the
sum of squared errors, classification trees the Gini impurity; leaves hold
the mean target, which is the positive fraction for 0/1 labels.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from core.datasets import Dataset, Task
from core.fingerprint import DEFAULT_N_BITS, ECFP6_RADIUS, ecfp, fingerprint_matrix
from core.molgraph import MolecularGraph

logger = logging.getLogger(__name__)

LEAF = -1
_MIN_GAIN = 1e-12


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_depth: Optional[int] = None
    min_samples_leaf: int = 1
    features_per_split: str = 'sqrt'
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.min_samples_leaf < 1:
            raise ValueError(f"min_samples_leaf must be >= 1, got {self.min_samples_leaf}")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError(f"max_depth must be >= 0, got {self.max_depth}")
        if self.features_per_split not in ('sqrt', 'all'):
            raise ValueError(f"features_per_split must be 'sqrt' or 'all', got {self.features_per_split!r}")


@dataclass(frozen=True)
class DecisionTree:
    """Flat node arrays; feature == LEAF marks a leaf"""
    feature: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(self.feature.shape[0])

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            feature = self.feature[node]
            internal = feature != LEAF
            if not internal.any():
                return self.value[node]
            bit = X[rows, np.where(internal, feature, 0)] > 0
            step = np.where(bit, self.right[node], self.left[node])
            node = np.where(internal, step, node)


@dataclass(frozen=True)
class Forest:
    trees: List[DecisionTree]
    task: Task
    radius: int = ECFP6_RADIUS
    n_bits: int = DEFAULT_N_BITS


def _split_scores(Xn: np.ndarray, y: np.ndarray, candidates: np.ndarray, task: Task,
                  min_leaf: int) -> np.ndarray:
    """Impurity decrease of every candidate bit; -inf where a child would be too small"""
    n = y.shape[0]
    right_mask = Xn[:, candidates]
    n_right = right_mask.sum(axis=0).astype(np.float64)
    n_left = n - n_right
    sum_right = y @ right_mask
    sum_left = y.sum() - sum_right

    if task is Task.BINARY_CLASSIFICATION:
        def gini_mass(count, positives):
            with np.errstate(divide='ignore', invalid='ignore'):
                p = np.where(count > 0, positives / np.where(count > 0, count, 1.0), 0.0)
            return count * 2.0 * p * (1.0 - p)

        parent = gini_mass(float(n), y.sum())
        child = gini_mass(n_right, sum_right) + gini_mass(n_left, sum_left)
    else:
        sq = y * y
        sq_right = sq @ right_mask
        sq_left = sq.sum() - sq_right
        with np.errstate(divide='ignore', invalid='ignore'):
            sse_right = np.where(n_right > 0, sq_right - sum_right ** 2 / np.where(n_right > 0, n_right, 1.0), 0.0)
            sse_left = np.where(n_left > 0, sq_left - sum_left ** 2 / np.where(n_left > 0, n_left, 1.0), 0.0)
        parent = sq.sum() - y.sum() ** 2 / n
        child = sse_right + sse_left

    gain = parent - child
    too_small = (n_right < min_leaf) | (n_left < min_leaf)
    return np.where(too_small, -np.inf, gain)


def _best_split(Xn: np.ndarray, y: np.ndarray, pool: np.ndarray, n_sample: int, task: Task,
                min_leaf: int, rng: np.random.Generator) -> Optional[int]:
    """Pick a bit: sampled candidates first, the whole non-constant pool as fallback"""
    if n_sample < len(pool):
        sampled = np.sort(rng.choice(pool, size=n_sample, replace=False))
        scores = _split_scores(Xn, y, sampled, task, min_leaf)
        best = int(np.argmax(scores))
        if scores[best] > _MIN_GAIN:
            return int(sampled[best])

    scores = _split_scores(Xn, y, pool, task, min_leaf)
    best = int(np.argmax(scores))
    if np.isneginf(scores[best]):
        return None
    return int(pool[best])


def _grow_tree(X: np.ndarray, y: np.ndarray, sample: np.ndarray, config: ForestConfig, task: Task,
               rng: np.random.Generator) -> DecisionTree:
    n_features = X.shape[1]
    n_sample = n_features if config.features_per_split == 'all' else max(1, int(np.sqrt(n_features)))

    feature: List[int] = []
    left: List[int] = []
    right: List[int] = []
    value: List[float] = []

    def new_node() -> int:
        feature.append(LEAF)
        left.append(LEAF)
        right.append(LEAF)
        value.append(0.0)
        return len(feature) - 1

    stack = [(new_node(), sample, 0)]
    while stack:
        node, rows, depth = stack.pop()
        y_node = y[rows]
        pure = bool(np.all(y_node == y_node[0]))
        value[node] = float(y_node[0]) if pure else float(y_node.mean())

        if pure or len(rows) < 2 * config.min_samples_leaf:
            continue
        if config.max_depth is not None and depth >= config.max_depth:
            continue

        Xn = X[rows]
        ones = Xn.sum(axis=0)
        pool = np.flatnonzero((ones > 0) & (ones < len(rows)))
        if not len(pool):
            continue

        bit = _best_split(Xn, y_node, pool, n_sample, task, config.min_samples_leaf, rng)
        if bit is None:
            continue

        goes_right = Xn[:, bit] > 0
        feature[node] = bit
        left[node] = new_node()
        right[node] = new_node()
        stack.append((right[node], rows[goes_right], depth + 1))
        stack.append((left[node], rows[~goes_right], depth + 1))

    return DecisionTree(
        feature=np.array(feature, dtype=np.int64),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        value=np.array(value, dtype=np.float64),
    )


def fit_forest_matrix(X: np.ndarray, y: np.ndarray, task: Task, config: ForestConfig) -> List[DecisionTree]:
    """Grow config.n_trees trees on a 0/1 feature matrix"""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = X.shape[0]
    if n < 2:
        raise ValueError(f"Random forest needs >= 2 training records, got {n}")

    trees = []
    for child_seed in np.random.SeedSequence(config.seed).spawn(config.n_trees):
        rng = np.random.default_rng(child_seed)
        sample = rng.integers(0, n, size=n) if config.bootstrap else np.arange(n)
        trees.append(_grow_tree(X, y, sample, config, Task(task), rng))
    return trees


def fit_forest(ds: Dataset, config: ForestConfig, radius: int = ECFP6_RADIUS,
               n_bits: int = DEFAULT_N_BITS) -> Forest:
    """
    Fit a random forest on fingerprints of a dataset

    Args:
        ds: Training dataset (>= 2 records)
        config: Forest hyperparameters
        radius: Fingerprint radius (ECFP6 by default)
        n_bits: Fingerprint width

    Returns:
        Forest, deterministic given config.seed
    """
    X = fingerprint_matrix([ecfp(mol, radius, n_bits) for mol in ds.graphs])
    trees = fit_forest_matrix(X, ds.targets, ds.task, config)
    logger.debug("Fitted %d trees on %d records (%s)", len(trees), len(ds), ds.name)
    return Forest(trees=trees, task=ds.task, radius=radius, n_bits=n_bits)


def predict_matrix(forest: Forest, X: np.ndarray) -> np.ndarray:
    """Mean tree output for each row of a 0/1 feature matrix"""
    return np.mean([tree.predict(X) for tree in forest.trees], axis=0)


def predict_forest_batch(forest: Forest, mols: Sequence[MolecularGraph]) -> np.ndarray:
    if not mols:
        return np.zeros(0)
    X = fingerprint_matrix([ecfp(mol, forest.radius, forest.n_bits) for mol in mols])
    return predict_matrix(forest, X)


def predict_forest(forest: Forest, mol: MolecularGraph) -> float:
    """Regression value or positive-class score in [0, 1]"""
    return float(predict_forest_batch(forest, [mol])[0])
