# analyzers/pca.py
"""
Two-component PCA of fingerprint matrices by power iteration with deflation.

The covariance is never formed: each iteration applies
C v = Xc^T (Xc v) / n to the mean-centred data Xc.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from analyzers.metrics import ShapeError
from core.fingerprint import Fingerprint, fingerprint_matrix
from utils.errors import GraftError

logger = logging.getLogger(__name__)

N_COMPONENTS = 2
MAX_ITER = 1000
TOL = 1e-9
_NULL_SPACE = 1e-12


class ConvergenceError(GraftError, ArithmeticError):
    """Power iteration did not settle within max_iter"""


@dataclass(frozen=True)
class PcaProjection:
    components: np.ndarray
    mean: np.ndarray
    explained_variance: np.ndarray
    points: List[Tuple[str, float, float]]

    def transform(self, X: np.ndarray) -> np.ndarray:
        """Project rows of X onto the two components"""
        return (np.asarray(X, dtype=np.float64) - self.mean) @ self.components.T

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.points, columns=['id', 'x', 'y'])


def _fix_sign(v: np.ndarray) -> np.ndarray:
    return v if v[int(np.argmax(np.abs(v)))] > 0 else -v


def _orthogonalize(v: np.ndarray, basis: Sequence[np.ndarray]) -> np.ndarray:
    for b in basis:
        v = v - (b @ v) * b
    return v


def _fallback_direction(dim: int, basis: Sequence[np.ndarray]) -> np.ndarray:
    """First standard basis vector not spanned by the components found so far"""
    for axis in range(dim):
        e = np.zeros(dim)
        e[axis] = 1.0
        v = _orthogonalize(e, basis)
        norm = np.linalg.norm(v)
        if norm > 1e-6:
            return v / norm
    raise ShapeError("No direction left for another component")


def _leading_direction(Xc: np.ndarray, basis: List[np.ndarray], max_iter: int, tol: float,
                       scale: float) -> Tuple[float, np.ndarray]:
    n, dim = Xc.shape

    def matvec(v: np.ndarray) -> np.ndarray:
        return _orthogonalize(Xc.T @ (Xc @ v) / n, basis)

    start = _orthogonalize(np.linspace(1.0, 2.0, dim), basis)
    y = matvec(start / np.linalg.norm(start))
    for iteration in range(1, max_iter + 1):
        norm = np.linalg.norm(y)
        if norm <= _NULL_SPACE * scale:
            return 0.0, _fallback_direction(dim, basis)
        v = y / norm
        y = matvec(v)
        w = float(v @ y)
        if np.linalg.norm(y - w * v) < tol * max(abs(w), _NULL_SPACE * scale):
            logger.debug("Power iteration converged in %d steps (eigenvalue %.6g)", iteration, w)
            return max(w, 0.0), v
    raise ConvergenceError(f"Power iteration did not converge in {max_iter} iterations")


def pca_fit_matrix(ids: Sequence[str], X: np.ndarray, max_iter: int = MAX_ITER,
                   tol: float = TOL) -> PcaProjection:
    """
    Top-2 principal components of the rows of X

    Args:
        ids: One id per row
        X: (n, d) real matrix, n >= 3
        max_iter: Iteration cap per component
        tol: Relative residual ||Cv - wv|| / |w| accepted as converged

    Returns:
        PcaProjection with population-covariance eigenvalues (divided by n)
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 3:
        raise ShapeError(f"PCA needs at least 3 points, got shape {X.shape}")
    if len(ids) != X.shape[0]:
        raise ShapeError(f"{len(ids)} ids for {X.shape[0]} rows")
    if X.shape[1] < N_COMPONENTS:
        raise ShapeError(f"PCA needs at least {N_COMPONENTS} dimensions, got {X.shape[1]}")

    mean = X.mean(axis=0)
    Xc = X - mean
    scale = max(float(np.sum(Xc * Xc)) / X.shape[0], 1.0)

    basis: List[np.ndarray] = []
    variances = []
    for _ in range(N_COMPONENTS):
        value, vector = _leading_direction(Xc, basis, max_iter, tol, scale)
        vector = _fix_sign(vector)
        basis.append(vector)
        variances.append(value)

    components = np.vstack(basis)
    coords = Xc @ components.T
    points = [(str(item_id), float(x), float(y)) for item_id, (x, y) in zip(ids, coords)]
    return PcaProjection(
        components=components,
        mean=mean,
        explained_variance=np.array(variances),
        points=points,
    )


def pca_fit_transform(fps: Sequence[Tuple[str, Fingerprint]], max_iter: int = MAX_ITER,
                      tol: float = TOL) -> PcaProjection:
    """PCA of fingerprints treated as 0/1 real vectors"""
    ids = [item_id for item_id, _ in fps]
    return pca_fit_matrix(ids, fingerprint_matrix([fp for _, fp in fps]), max_iter=max_iter, tol=tol)


def write_projection_csv(projection: PcaProjection, path: Union[str, Path]) -> Path:
    """Write id,x,y rows"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    projection.to_frame().to_csv(path, index=False)
    return path
