# analyzers/appdomain.py
"""
Applicability domain by average k-nearest-neighbour Tanimoto distance.

A query N is inside the domain when its mean distance to the k nearest
training fingerprints, D_N, is below D_train, the mean of the same
statistic taken for each training molecule against the other ones.
"""

import logging
from dataclasses import dataclass, field
from typing import Sequence, Tuple, Union

import numpy as np

from core.datasets import Dataset
from core.fingerprint import (DEFAULT_N_BITS, ECFP4_RADIUS, Fingerprint, LengthMismatch, ecfp,
                              fingerprint_matrix, tanimoto_distance_matrix)
from core.molgraph import MolecularGraph
from utils.errors import GraftError

logger = logging.getLogger(__name__)


class TooFewMolecules(GraftError, ValueError):
    """Domain needs at least two training molecules"""


@dataclass(frozen=True)
class AdModel:
    train_fps: Tuple[Fingerprint, ...]
    k: int
    k_eff: int
    per_train_avg: np.ndarray = field(compare=False)
    d_train: float
    strict: bool = True
    train_matrix: np.ndarray = field(repr=False, compare=False, default=None)

    @property
    def radius(self) -> int:
        return self.train_fps[0].radius

    @property
    def n_bits(self) -> int:
        return self.train_fps[0].n_bits


def _mean_of_smallest(distances: np.ndarray, k: int) -> np.ndarray:
    return np.sort(distances, axis=1)[:, :k].mean(axis=1)


def fit_ad_fingerprints(fps: Sequence[Fingerprint], k: int = 5, strict: bool = True) -> AdModel:
    """Fit on precomputed fingerprints"""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if len(fps) < 2:
        raise TooFewMolecules(f"Applicability domain needs >= 2 training molecules, got {len(fps)}")

    matrix = fingerprint_matrix(list(fps))
    distances = tanimoto_distance_matrix(matrix, matrix)
    np.fill_diagonal(distances, np.inf)

    k_eff = min(k, len(fps) - 1)
    per_train_avg = _mean_of_smallest(distances, k_eff)
    d_train = float(per_train_avg.mean())
    logger.debug("AD fitted on %d molecules: k'=%d, D_train=%.4f", len(fps), k_eff, d_train)
    return AdModel(
        train_fps=tuple(fps),
        k=k,
        k_eff=k_eff,
        per_train_avg=per_train_avg,
        d_train=d_train,
        strict=strict,
        train_matrix=matrix,
    )


def fit_ad(train_mols: Sequence[MolecularGraph], k: int = 5, radius: int = ECFP4_RADIUS,
           n_bits: int = DEFAULT_N_BITS, strict: bool = True) -> AdModel:
    """
    Fit the domain of a training set

    Args:
        train_mols: Training molecules (at least two)
        k: Neighbour count; clipped to len(train_mols) - 1
        radius: Fingerprint radius (ECFP4 by default)
        n_bits: Fingerprint width
        strict: Use D_N < D_train (True) or D_N <= D_train

    Returns:
        AdModel
    """
    if len(train_mols) < 2:
        raise TooFewMolecules(f"Applicability domain needs >= 2 training molecules, got {len(train_mols)}")
    return fit_ad_fingerprints([ecfp(mol, radius, n_bits) for mol in train_mols], k=k, strict=strict)


def query_fingerprints(ad: AdModel, fps: Sequence[Fingerprint]) -> Tuple[np.ndarray, np.ndarray]:
    """(included flags, D_N values) for query fingerprints"""
    if not fps:
        return np.zeros(0, dtype=bool), np.zeros(0)
    for fp in fps:
        if fp.n_bits != ad.n_bits or fp.radius != ad.radius:
            raise LengthMismatch(
                f"Query fingerprint ({fp.n_bits} bits, r={fp.radius}) does not match the domain "
                f"({ad.n_bits} bits, r={ad.radius})")
    train_matrix = ad.train_matrix if ad.train_matrix is not None else fingerprint_matrix(list(ad.train_fps))
    distances = tanimoto_distance_matrix(fingerprint_matrix(list(fps)), train_matrix)
    d_n = _mean_of_smallest(distances, ad.k_eff)
    included = d_n < ad.d_train if ad.strict else d_n <= ad.d_train
    return included, d_n


def in_domain_batch(ad: AdModel, mols: Sequence[MolecularGraph]) -> Tuple[np.ndarray, np.ndarray]:
    return query_fingerprints(ad, [ecfp(mol, ad.radius, ad.n_bits) for mol in mols])


def in_domain(ad: AdModel, mol: MolecularGraph) -> Tuple[bool, float]:
    """(included, D_N) for one molecule"""
    included, d_n = in_domain_batch(ad, [mol])
    return bool(included[0]), float(d_n[0])


def ad_coverage(ad: AdModel, test: Union[Dataset, Sequence[MolecularGraph]]) -> float:
    """Fraction of test molecules inside the domain"""
    mols = test.graphs if isinstance(test, Dataset) else list(test)
    if not mols:
        raise ValueError("Coverage needs a non-empty test set")
    included, _ = in_domain_batch(ad, mols)
    return float(included.mean())
