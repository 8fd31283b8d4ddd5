# modules/sampling.py
"""
Dataset composition for transfer experiments.
One job: carve small training sets out of a dataset (max-min diversity over
one property, or random), binarize endpoints, and cut PCA regions.
"""

import enum
import logging
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from core.datasets import Dataset, DatasetError, Record, RecordError, Task
from core.molgraph import DESCRIPTOR_NAMES, DescriptorVector, MolecularGraph, compute_descriptors
from utils.errors import GraftError

logger = logging.getLogger(__name__)


class KTooLarge(GraftError, ValueError):
    """More items requested than available"""


class EmptyRegion(GraftError, ValueError):
    """No record projects into the requested box"""


class SplitProperty(str, enum.Enum):
    ENDPOINT = 'endpoint'
    MOLECULAR_WEIGHT = 'molecular_weight'
    AROMATIC_RINGS = 'aromatic_rings'
    ROTATABLE_BONDS = 'rotatable_bonds'
    HBA = 'hba'
    HBD = 'hbd'
    HETEROCYCLES = 'heterocycles'
    TPSA = 'tpsa'
    RANDOM = 'random'


@dataclass(frozen=True)
class SplitResult:
    """Disjoint train/test id lists; train_ids in selection order"""
    train_ids: Tuple[str, ...]
    test_ids: Tuple[str, ...]
    split_property: SplitProperty
    train_size: int

    def apply(self, ds: Dataset) -> Tuple[Dataset, Dataset]:
        train = ds.subset(self.train_ids, name=f"{ds.name}-train{self.train_size}")
        test = ds.subset(self.test_ids, name=f"{ds.name}-test")
        return train, test


def maxmin_select(values: Sequence[Tuple[str, float]], k: int) -> List[str]:
    """
    Greedy max-min selection on a 1-D property

    First pick is the minimum value, second the maximum; each further pick
    maximizes its smallest absolute gap to the picks so far. Ties go to the
    smaller value, then the smaller id.

    Args:
        values: (id, value) pairs with unique ids and finite values
        k: Number of ids to pick

    Returns:
        Ids in pick order (every prefix is the answer for a smaller k)

    Raises:
        KTooLarge: k exceeds the number of values
    """
    n = len(values)
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    if k > n:
        raise KTooLarge(f"Cannot select {k} of {n} items")

    ids = [item_id for item_id, _ in values]
    if len(set(ids)) != n:
        raise ValueError("maxmin_select needs unique ids")
    x = np.array([value for _, value in values], dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("maxmin_select needs finite values")
    if k == 0:
        return []

    order = sorted(range(n), key=lambda i: (x[i], ids[i]))
    rank = np.empty(n, dtype=np.int64)
    rank[order] = np.arange(n)

    selected = np.zeros(n, dtype=bool)
    picks = [order[0]]
    selected[order[0]] = True
    if k > 1:
        top = x.max()
        second = next(i for i in order if x[i] == top and not selected[i])
        picks.append(second)
        selected[second] = True

    min_gap = np.full(n, np.inf)
    for pick in picks:
        np.minimum(min_gap, np.abs(x - x[pick]), out=min_gap)

    while len(picks) < k:
        gaps = np.where(selected, -np.inf, min_gap)
        best = gaps.max()
        ties = np.flatnonzero(gaps == best)
        pick = int(ties[np.argmin(rank[ties])])
        picks.append(pick)
        selected[pick] = True
        np.minimum(min_gap, np.abs(x - x[pick]), out=min_gap)

    return [ids[i] for i in picks]


def property_values(ds: Dataset, split_property: SplitProperty,
                    descriptor_fn: Callable[[MolecularGraph], DescriptorVector] = compute_descriptors
                    ) -> List[Tuple[str, float]]:
    """(id, value) for every record; descriptor failures name the record"""
    split_property = SplitProperty(split_property)
    if split_property is SplitProperty.ENDPOINT:
        return [(record.id, record.target) for record in ds]
    if split_property.value not in DESCRIPTOR_NAMES:
        raise ValueError(f"Property {split_property.value} has no descriptor value")

    values = []
    for record, mol in zip(ds.records, ds.graphs):
        try:
            values.append((record.id, descriptor_fn(mol).value(split_property.value)))
        except (GraftError, ValueError, KeyError) as e:
            raise RecordError(record.id, e) from e
    return values


def diversity_split(ds: Dataset, split_property: SplitProperty, k: int,
                    descriptor_fn: Callable[[MolecularGraph], DescriptorVector] = compute_descriptors,
                    seed: int = 0) -> SplitResult:
    """
    Split a dataset into a k-molecule training set and the remaining test set

    Args:
        ds: Dataset to split
        split_property: Property spread by max-min, or 'random'
        k: Training set size
        descriptor_fn: Descriptor function for non-endpoint properties
        seed: Seed for the random split

    Returns:
        SplitResult partitioning ds exactly
    """
    split_property = SplitProperty(split_property)
    if k > len(ds):
        raise KTooLarge(f"Cannot take {k} training molecules from {len(ds)} records")

    if split_property is SplitProperty.RANDOM:
        rng = np.random.default_rng(seed)
        chosen = rng.choice(len(ds), size=k, replace=False)
        train_ids = [ds.records[i].id for i in chosen]
    else:
        train_ids = maxmin_select(property_values(ds, split_property, descriptor_fn), k)

    train_set = set(train_ids)
    test_ids = tuple(record.id for record in ds if record.id not in train_set)
    return SplitResult(
        train_ids=tuple(train_ids),
        test_ids=test_ids,
        split_property=split_property,
        train_size=k,
    )


def _normalize_rule(positive_when: str) -> str:
    rules = {'>=': '>=', '≥': '>=', 'ge': '>=', '<=': '<=', '≤': '<=', 'le': '<='}
    if positive_when not in rules:
        raise ValueError(f"positive_when must be '>=' or '<=', got {positive_when!r}")
    return rules[positive_when]


def binarize_endpoint(ds: Dataset, threshold: float, positive_when: str = '>=') -> Dataset:
    """Label 1 where the target satisfies the comparison against threshold"""
    rule = _normalize_rule(positive_when)
    records = []
    for record in ds:
        hit = record.target >= threshold if rule == '>=' else record.target <= threshold
        records.append(Record(id=record.id, smiles=record.smiles, target=1.0 if hit else 0.0))

    binarized = Dataset(
        records=tuple(records),
        task=Task.BINARY_CLASSIFICATION,
        name=f"{ds.name}[{rule}{threshold:g}]",
        metadata={**ds.metadata, 'threshold': repr(threshold), 'positive_when': rule},
    )
    positives = int(binarized.targets.sum())
    logger.debug("Binarized %s: %d positive of %d", ds.name, positives, len(binarized))
    return binarized


def filter_by_pca_box(ds: Dataset, projections: Iterable[Tuple[str, float, float]],
                      box: Tuple[float, float, float, float], max_n: int,
                      seed: int = 0, name: Optional[str] = None) -> Dataset:
    """
    Records whose 2-D projection lies in a closed box

    Args:
        ds: Dataset to filter
        projections: (id, x, y) for every record
        box: (xmin, xmax, ymin, ymax)
        max_n: Cap; larger hits are subsampled uniformly with seed
        seed: Subsampling seed
        name: Name of the returned dataset

    Raises:
        EmptyRegion: nothing falls in the box
    """
    xmin, xmax, ymin, ymax = box
    coords: Dict[str, Tuple[float, float]] = {item_id: (x, y) for item_id, x, y in projections}
    missing = [record.id for record in ds if record.id not in coords]
    if missing:
        raise DatasetError(f"{len(missing)} record(s) lack a projection, e.g. {missing[:3]}")

    hits = [
        i for i, record in enumerate(ds.records)
        if xmin <= coords[record.id][0] <= xmax and ymin <= coords[record.id][1] <= ymax
    ]
    if not hits:
        raise EmptyRegion(f"No record of {ds.name} lies in box {box}")

    if len(hits) > max_n:
        rng = np.random.default_rng(seed)
        hits = sorted(rng.choice(hits, size=max_n, replace=False).tolist())

    return ds.subset([ds.records[i].id for i in hits], name=name or f"{ds.name}-box")


def nested_subsamples(ds: Dataset, sizes: Sequence[int], seed: int) -> Dict[int, Dataset]:
    """Random subsets where every smaller size is a prefix of the larger ones"""
    if max(sizes, default=0) > len(ds):
        raise KTooLarge(f"Largest subsample {max(sizes)} exceeds {len(ds)} records")
    order = np.random.default_rng(seed).permutation(len(ds))
    return {
        size: ds.subset([ds.records[i].id for i in order[:size]], name=f"{ds.name}-n{size}")
        for size in sorted(sizes)
    }
