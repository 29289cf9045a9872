"""Skipped correlation matrices and the T / T_max statistics built on them."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from . import _kernels
from .core_stats import pearson, spearman
from .errors import BoundaryCorrelationError, DegenerateSampleError
from .outliers import DetectionRule, DetectorLike, OutlierMask, as_data_matrix, detect_outliers


class EstimatorKind(str, enum.Enum):
    PEARSON = "pearson"
    SPEARMAN = "spearman"

    @property
    def code(self) -> int:
        return _kernels.PEARSON if self is EstimatorKind.PEARSON else _kernels.SPEARMAN

    def __call__(self, x, y) -> float:
        return pearson(x, y) if self is EstimatorKind.PEARSON else spearman(x, y)


@dataclass(frozen=True)
class AssociationEstimate:
    j: int
    k: int
    kind: EstimatorKind
    value: float
    m: int

    def __post_init__(self):
        if not self.j < self.k:
            raise ValueError("pair indices must satisfy j < k")
        if not -1.0 <= self.value <= 1.0:
            raise ValueError("correlation outside [-1, 1]")


@dataclass(frozen=True)
class SkippedCorrelationMatrix:
    p: int
    estimates: tuple[AssociationEstimate, ...]
    mask: OutlierMask

    @property
    def values(self) -> np.ndarray:
        return np.array([e.value for e in self.estimates])

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return [(e.j, e.k) for e in self.estimates]

    def matrix(self) -> np.ndarray:
        out = np.eye(self.p)
        for e in self.estimates:
            out[e.j, e.k] = out[e.k, e.j] = e.value
        return out


def pair_indices(p: int) -> list[tuple[int, int]]:
    return list(combinations(range(p), 2))


def retained_rows(data: np.ndarray, mask: OutlierMask) -> np.ndarray:
    kept = data[mask.kept]
    if kept.shape[0] < 3:
        raise DegenerateSampleError("too few retained rows")
    if np.any(np.ptp(kept, axis=0) == 0):
        raise DegenerateSampleError("degenerate column after skipping")
    return kept


def skipped_correlation_matrix(data, kind: EstimatorKind | str = EstimatorKind.PEARSON,
                               rule: DetectionRule | None = None,
                               detector: DetectorLike | None = None) -> SkippedCorrelationMatrix:
    """Correlate every pair of columns after removing rows flagged on the full cloud."""
    kind = EstimatorKind(kind)
    X = as_data_matrix(data)
    mask = detector(X) if detector is not None else detect_outliers(X, rule)
    kept = retained_rows(X, mask)
    m = kept.shape[0]
    estimates = tuple(
        AssociationEstimate(j, k, kind, kind(kept[:, j], kept[:, k]), m)
        for j, k in pair_indices(X.shape[1])
    )
    return SkippedCorrelationMatrix(X.shape[1], estimates, mask)


def skipped_association_with(y, X, kind: EstimatorKind | str = EstimatorKind.PEARSON,
                             rule: DetectionRule | None = None) -> tuple[np.ndarray, OutlierMask]:
    """Skipped correlations of y with each column of X, outliers flagged on (y, X) jointly."""
    kind = EstimatorKind(kind)
    joint = as_data_matrix(np.column_stack([np.asarray(y, dtype=float), np.asarray(X, dtype=float)]))
    mask = detect_outliers(joint, rule)
    kept = retained_rows(joint, mask)
    values = np.array([kind(kept[:, 0], kept[:, j]) for j in range(1, joint.shape[1])])
    return values, mask


def t_statistic(tau: float, n: int) -> float:
    if n < 3:
        raise ValueError("n must be at least 3")
    if abs(tau) >= 1.0:
        raise BoundaryCorrelationError("boundary correlation")
    return tau * math.sqrt((n - 2) / (1 - tau * tau))


def t_statistics(values, n: int) -> np.ndarray:
    """Vector of T statistics; |tau| = 1 maps to a signed infinity."""
    values = np.asarray(values, dtype=float)
    out = np.empty_like(values)
    boundary = np.abs(values) >= 1.0
    out[boundary] = np.copysign(np.inf, values[boundary])
    v = values[~boundary]
    out[~boundary] = v * np.sqrt((n - 2) / (1 - v * v))
    return out


def t_max(matrix: SkippedCorrelationMatrix, n: int) -> float:
    """Largest |T_jk| over all pairs; +inf when some pair is perfectly correlated."""
    return float(np.max(np.abs(t_statistics(matrix.values, n))))
