# analyzers/metrics.py
"""
Evaluation metrics and splitter ranking.
One job: score predictions (R², ROC AUC) and turn per-repetition scores into sums of places.
"""

import enum
from dataclasses import dataclass
from typing import Dict, Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from utils.errors import GraftError


class ZeroVariance(GraftError, ValueError):
    """R² is undefined for a constant y_true"""


class OneClassOnly(GraftError, ValueError):
    """ROC AUC needs both classes"""


class ShapeError(GraftError, ValueError):
    """Inputs have the wrong shape or contain NaN"""


class MetricName(str, enum.Enum):
    R2 = 'r2'
    ROC_AUC = 'roc_auc'


@dataclass(frozen=True)
class MetricReport:
    metric_name: MetricName
    value: float
    n: int

    def as_dict(self) -> Dict[str, object]:
        return {'metric': self.metric_name.value, 'value': self.value, 'n': self.n}


def _paired(y_true: Sequence[float], y_pred: Sequence[float]):
    a = np.asarray(y_true, dtype=np.float64)
    b = np.asarray(y_pred, dtype=np.float64)
    if a.ndim != 1 or a.shape != b.shape or a.size == 0:
        raise ShapeError(f"Expected two equal-length non-empty vectors, got {a.shape} and {b.shape}")
    return a, b


def r2_score(y_true: Sequence[float], y_pred: Sequence[float]) -> float:
    """1 - SS_res / SS_tot"""
    a, b = _paired(y_true, y_pred)
    ss_tot = float(np.sum((a - a.mean()) ** 2))
    if ss_tot == 0.0:
        raise ZeroVariance("y_true has zero variance")
    ss_res = float(np.sum((a - b) ** 2))
    return 1.0 - ss_res / ss_tot


def roc_auc(y_true: Sequence[float], scores: Sequence[float]) -> float:
    """
    Rank-based ROC AUC (Mann-Whitney U); tied scores count one half

    Raises:
        OneClassOnly: labels are all 0 or all 1
    """
    labels, s = _paired(y_true, scores)
    positive = labels == 1.0
    n_pos = int(positive.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise OneClassOnly(f"ROC AUC needs both classes ({n_pos} positive, {n_neg} negative)")
    ranks = rankdata(s)
    u = ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def evaluate(task_is_classification: bool, y_true: Sequence[float], y_pred: Sequence[float]) -> MetricReport:
    """R² for regression, ROC AUC for classification"""
    if task_is_classification:
        return MetricReport(MetricName.ROC_AUC, roc_auc(y_true, y_pred), len(y_true))
    return MetricReport(MetricName.R2, r2_score(y_true, y_pred), len(y_true))


def rank_sum(results: np.ndarray) -> np.ndarray:
    """
    Sum of places per property

    Args:
        results: (properties x repetitions) metric values, higher is better

    Returns:
        Per-property sum of ranks (rank 1 best; ties share the mean rank)
    """
    matrix = np.asarray(results, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] < 2 or matrix.shape[1] < 1:
        raise ShapeError(f"rank_sum needs a (>=2 properties) x (>=1 repetitions) matrix, got {matrix.shape}")
    if np.isnan(matrix).any():
        raise ShapeError("rank_sum input contains NaN")
    ranks = rankdata(-matrix, axis=0)
    return ranks.sum(axis=1)


def rank_sum_table(results: Mapping[str, Sequence[float]]) -> Dict[str, float]:
    """rank_sum keyed by property name"""
    names = list(results)
    lengths = {len(results[name]) for name in names}
    if len(lengths) != 1:
        raise ShapeError(f"Every property needs the same number of repetitions, got {sorted(lengths)}")
    sums = rank_sum(np.array([list(results[name]) for name in names]))
    return {name: float(total) for name, total in zip(names, sums)}
