# tests/test_sampling.py
import numpy as np
import pytest

from core.datasets import Dataset, Record, Task
from modules.sampling import (EmptyRegion, KTooLarge, SplitProperty, binarize_endpoint, diversity_split,
                              filter_by_pca_box, maxmin_select, nested_subsamples, property_values)


def _brute_force_maxmin(values, k):
    remaining = list(values)
    remaining.sort(key=lambda item: (item[1], item[0]))
    if k == 0:
        return []
    picks = [remaining.pop(0)]
    if k > 1:
        top = max(v for _, v in remaining)
        second = next(item for item in remaining if item[1] == top)
        remaining.remove(second)
        picks.append(second)
    while len(picks) < k:
        def score(item):
            gap = min(abs(item[1] - p[1]) for p in picks)
            return (-gap, item[1], item[0])
        best = min(remaining, key=score)
        remaining.remove(best)
        picks.append(best)
    return [item_id for item_id, _ in picks]


def test_maxmin_hand_example():
    values = [('a', 0.0), ('b', 10.0), ('c', 5.0), ('d', 4.0), ('e', 9.0)]
    assert maxmin_select(values, 4) == ['a', 'b', 'c', 'd']
    assert maxmin_select(values, 0) == []


def test_maxmin_matches_exhaustive_greedy():
    rng = np.random.default_rng(0)
    for trial in range(200):
        n = int(rng.integers(1, 13))
        raw = rng.integers(0, 6, size=n).astype(float)
        values = [(f"id{i:02d}", float(v)) for i, v in enumerate(raw)]
        k = int(rng.integers(0, n + 1))
        assert maxmin_select(values, k) == _brute_force_maxmin(values, k), (values, k)


def test_maxmin_prefix_property():
    rng = np.random.default_rng(1)
    values = [(f"m{i}", float(v)) for i, v in enumerate(rng.normal(size=30))]
    full = maxmin_select(values, 30)
    for k in range(31):
        assert maxmin_select(values, k) == full[:k]


def test_maxmin_rejects_bad_input():
    with pytest.raises(KTooLarge):
        maxmin_select([('a', 1.0)], 2)
    with pytest.raises(ValueError):
        maxmin_select([('a', 1.0), ('a', 2.0)], 1)
    with pytest.raises(ValueError):
        maxmin_select([('a', float('nan'))], 1)


def test_endpoint_split_partitions_dataset(small_dataset):
    split = diversity_split(small_dataset, SplitProperty.ENDPOINT, 5)
    assert len(split.train_ids) == 5
    assert set(split.train_ids).isdisjoint(split.test_ids)
    assert set(split.train_ids) | set(split.test_ids) == set(small_dataset.ids)
    targets = dict(zip(small_dataset.ids, small_dataset.targets))
    train_targets = [targets[i] for i in split.train_ids]
    assert min(train_targets) == small_dataset.targets.min()
    assert max(train_targets) == small_dataset.targets.max()

    train, test = split.apply(small_dataset)
    assert len(train) == 5 and len(test) == len(small_dataset) - 5


def test_descriptor_split_spreads_the_descriptor(small_dataset):
    split = diversity_split(small_dataset, SplitProperty.MOLECULAR_WEIGHT, 3)
    weights = dict(property_values(small_dataset, SplitProperty.MOLECULAR_WEIGHT))
    chosen = [weights[i] for i in split.train_ids]
    assert chosen[0] == min(weights.values())
    assert chosen[1] == max(weights.values())


def test_random_split_is_seeded(small_dataset):
    a = diversity_split(small_dataset, SplitProperty.RANDOM, 6, seed=3)
    b = diversity_split(small_dataset, SplitProperty.RANDOM, 6, seed=3)
    c = diversity_split(small_dataset, SplitProperty.RANDOM, 6, seed=4)
    assert a == b
    assert a.train_ids != c.train_ids
    with pytest.raises(KTooLarge):
        diversity_split(small_dataset, SplitProperty.RANDOM, len(small_dataset) + 1)


def test_binarize_endpoint(small_dataset):
    high = binarize_endpoint(small_dataset, 6.0, '>=')
    assert high.task is Task.BINARY_CLASSIFICATION
    assert high.name == 'small[>=6]'
    assert high.targets.tolist() == [1.0 if t >= 6.0 else 0.0 for t in small_dataset.targets]
    low = binarize_endpoint(small_dataset, 6.0, '≤')
    assert low.targets.tolist() == [1.0 if t <= 6.0 else 0.0 for t in small_dataset.targets]
    with pytest.raises(ValueError):
        binarize_endpoint(small_dataset, 6.0, '>')


def test_pca_box_recovers_planted_cluster(small_dataset):
    rng = np.random.default_rng(0)
    ids = small_dataset.ids
    planted = set(ids[:8])
    projections = []
    for item_id in ids:
        centre = (5.0, 5.0) if item_id in planted else (-5.0, -5.0)
        x, y = rng.normal(centre, 0.5)
        projections.append((item_id, float(x), float(y)))

    region = filter_by_pca_box(small_dataset, projections, (0.0, 10.0, 0.0, 10.0), max_n=100)
    assert set(region.ids) == planted

    capped = filter_by_pca_box(small_dataset, projections, (0.0, 10.0, 0.0, 10.0), max_n=3, seed=1)
    again = filter_by_pca_box(small_dataset, projections, (0.0, 10.0, 0.0, 10.0), max_n=3, seed=1)
    assert len(capped) == 3 and capped.ids == again.ids
    assert set(capped.ids) <= planted

    with pytest.raises(EmptyRegion):
        filter_by_pca_box(small_dataset, projections, (20.0, 30.0, 20.0, 30.0), max_n=10)


def test_pca_box_is_closed():
    dataset = Dataset(records=(Record('a', 'CCO', 1.0), Record('b', 'CCC', 2.0)))
    region = filter_by_pca_box(dataset, [('a', 1.0, 1.0), ('b', 2.0, 2.0)], (1.0, 2.0, 1.0, 2.0), max_n=5)
    assert region.ids == ['a', 'b']


def test_nested_subsamples(small_dataset):
    subsets = nested_subsamples(small_dataset, [4, 8, 12], seed=5)
    assert set(subsets[4].ids) <= set(subsets[8].ids) <= set(subsets[12].ids)
    assert [len(subsets[n]) for n in (4, 8, 12)] == [4, 8, 12]
    with pytest.raises(KTooLarge):
        nested_subsamples(small_dataset, [100], seed=0)
