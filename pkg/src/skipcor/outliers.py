"""Projection-type multivariate outlier detection.

For each anchor row, every point is projected onto the line through the
marginal-median center and the anchor; a boxplot-style rule on the projected
distances flags extreme points.  A row is an outlier when any projection
flags it.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from . import _kernels, rng as rngmod
from .core_stats import chi_square_quantile, fourths_positions
from .errors import ZeroSpreadError

MAD_CONSTANT = 0.6745


class Rule(str, enum.Enum):
    IQR = "iqr"
    MAD = "mad"


class Projection(str, enum.Enum):
    # points projected onto the center-anchor line (the detector's geometry)
    ANCHOR_LINE = "anchor"
    # the anchor projected onto each point's direction, C_j = (A'B_j / B_j'B_j) B_j
    POINT_LINE = "point"


@dataclass(frozen=True)
class DetectionRule:
    variant: Rule = Rule.IQR
    chi_prob: float = 0.95
    projection: Projection = Projection.ANCHOR_LINE

    def __post_init__(self):
        object.__setattr__(self, "variant", Rule(self.variant))
        object.__setattr__(self, "projection", Projection(self.projection))
        if not (0.0 < self.chi_prob < 1.0):
            raise ValueError("chi_prob must lie in (0, 1)")

    def gval(self, p: int) -> float:
        return math.sqrt(chi_square_quantile(self.chi_prob, p))

    @property
    def kernel_args(self) -> tuple[bool, int]:
        along = _kernels.ALONG_ANCHOR if self.projection is Projection.ANCHOR_LINE else _kernels.ALONG_POINT
        return self.variant is Rule.MAD, along


@dataclass(frozen=True)
class OutlierMask:
    flags: np.ndarray
    count_flagged: int = field(init=False)

    def __post_init__(self):
        flags = np.asarray(self.flags, dtype=bool).copy()
        flags.setflags(write=False)
        object.__setattr__(self, "flags", flags)
        object.__setattr__(self, "count_flagged", int(flags.sum()))

    @property
    def n(self) -> int:
        return self.flags.size

    @property
    def kept(self) -> np.ndarray:
        return ~self.flags


class Detector(Protocol):
    """Anything mapping an n x p matrix to an OutlierMask (MCD, MVE, ... plug in here)."""

    def __call__(self, data: np.ndarray) -> OutlierMask: ...


def as_data_matrix(data, min_cols: int = 2) -> np.ndarray:
    """Validate an n x p matrix of finite reals (n >= 2, p >= min_cols)."""
    arr = np.array(data, dtype=float, copy=True)
    if arr.ndim != 2:
        raise ValueError("data must be a two-dimensional matrix")
    n, p = arr.shape
    if n < 2:
        raise ValueError("data needs at least 2 rows")
    if p < min_cols:
        raise ValueError(f"data needs at least {min_cols} columns")
    if not np.all(np.isfinite(arr)):
        raise ValueError("data contains missing or non-finite entries")
    return arr


def marginal_medians(data) -> np.ndarray:
    return np.median(as_data_matrix(data, min_cols=1), axis=0)


def projection_distances(data, center, anchor_index: int,
                         projection: Projection | str = Projection.ANCHOR_LINE) -> np.ndarray:
    """Distances from the center of all projected points for one anchor row."""
    X = as_data_matrix(data, min_cols=1)
    center = np.asarray(center, dtype=float)
    if center.shape != (X.shape[1],):
        raise ValueError("center length must equal the number of columns")
    A = X[anchor_index] - center
    norm_a = math.sqrt(float(A @ A))
    if norm_a == 0.0:
        raise ValueError("degenerate projection axis")
    B = X - center
    dots = np.abs(B @ A)
    if Projection(projection) is Projection.ANCHOR_LINE:
        return dots / norm_a
    norms = np.sqrt(np.einsum("ij,ij->i", B, B))
    out = np.zeros(X.shape[0])
    nz = norms > 0
    out[nz] = dots[nz] / norms[nz]
    return out


def _cutoffs(D: np.ndarray, rule: DetectionRule, gval: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-row median and spread of a (anchors x n) distance array."""
    n = D.shape[1]
    S = np.sort(D, axis=1)
    med = np.median(S, axis=1)
    if rule.variant is Rule.MAD:
        spread = np.median(np.abs(D - med[:, None]), axis=1) / MAD_CONSTANT
    else:
        ell, k, h = fourths_positions(n)
        lo = S[:, max(ell, 1) - 1]
        hi = S[:, min(k, n) - 1]
        q1 = (1 - h) * lo + h * S[:, ell]
        q2 = (1 - h) * hi + h * S[:, k - 2]
        spread = q2 - q1
    return med, spread


def detect_outliers(data, rule: DetectionRule | None = None) -> OutlierMask:
    rule = rule or DetectionRule()
    X = as_data_matrix(data)
    n, p = X.shape
    gval = rule.gval(p)
    B = X - marginal_medians(X)
    norms = np.sqrt(np.einsum("ij,ij->i", B, B))
    anchors = np.flatnonzero(norms > 0)
    flags = np.zeros(n, dtype=bool)
    if anchors.size == 0:
        return OutlierMask(flags)
    dots = np.abs(B[anchors] @ B.T)
    if rule.projection is Projection.ANCHOR_LINE:
        D = dots / norms[anchors, None]
    else:
        safe = np.where(norms > 0, norms, 1.0)
        D = np.where(norms > 0, dots / safe, 0.0)
    med, spread = _cutoffs(D, rule, gval)
    bad = np.flatnonzero(~(spread > 0))
    if bad.size:
        raise ZeroSpreadError(int(anchors[bad[0]]))
    flags = (D > (med + gval * spread)[:, None]).any(axis=0)
    return OutlierMask(flags)


@dataclass(frozen=True)
class OutsideRate:
    rate: float
    se: float
    reps: int
    skipped: int

    def __float__(self):
        return self.rate


def outside_rate(n: int, p: int, reps: int, rule: DetectionRule | None = None,
                 seed: int = 0) -> OutsideRate:
    """Monte Carlo estimate of the expected fraction of rows flagged in normal data."""
    if reps < 100:
        raise ValueError("reps must be at least 100")
    rule = rule or DetectionRule()
    gval = rule.gval(p)
    use_mad, along = rule.kernel_args
    flags = np.zeros(n, dtype=bool)
    anchors = np.ones(n, dtype=bool)
    fractions = []
    skipped = 0
    for r in range(reps):
        X = rngmod.standard_normal(rngmod.substream(seed, rngmod.DATA, r), (n, p))
        if _kernels.flag_outliers(X, gval, use_mad, along, flags, anchors):
            skipped += 1
            continue
        fractions.append(flags.sum() / n)
    fr = np.asarray(fractions)
    rate = float(fr.mean()) if fr.size else float("nan")
    se = float(fr.std(ddof=1) / math.sqrt(fr.size)) if fr.size > 1 else float("nan")
    return OutsideRate(rate, se, reps, skipped)


def kernel_detect(X: np.ndarray, rule: DetectionRule) -> OutlierMask:
    """Compiled-path detection, used to cross-check detect_outliers."""
    n, p = X.shape
    use_mad, along = rule.kernel_args
    flags = np.zeros(n, dtype=bool)
    status = _kernels.flag_outliers(np.ascontiguousarray(X, dtype=float), rule.gval(p), use_mad, along,
                                    flags, np.ones(n, dtype=bool))
    if status:
        raise ZeroSpreadError(status - 1)
    return OutlierMask(flags)


DetectorLike = Callable[[np.ndarray], OutlierMask]
