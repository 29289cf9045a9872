"""Scalar and vector statistics shared by the detector and the inference engines."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import special, stats


@dataclass(frozen=True)
class Quantile:
    q: float

    def __post_init__(self):
        if not (0.0 <= self.q <= 1.0) or math.isnan(self.q):
            raise ValueError(f"quantile must lie in [0, 1], got {self.q}")


@dataclass(frozen=True)
class IdealFourths:
    q1: float
    q2: float

    @property
    def spread(self) -> float:
        return self.q2 - self.q1


def _as_sample(values, name="values") -> np.ndarray:
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size == 0:
        raise ValueError("empty sample")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def median(values: Sequence[float]) -> float:
    arr = np.sort(_as_sample(values))
    n = arr.size
    mid = n // 2
    if n % 2:
        return float(arr[mid])
    return float((arr[mid - 1] + arr[mid]) / 2.0)


def fourths_positions(n: int) -> tuple[int, int, float]:
    """Return (ell, k, h) for a sample of size n, with 1-based ell and k."""
    ell = math.floor(n / 4 + 5 / 12)
    h = n / 4 + 5 / 12 - ell
    k = n - ell + 1
    return ell, k, h


def ideal_fourths(values: Sequence[float]) -> IdealFourths:
    """Ideal fourths of a sample.

    The lower fourth interpolates between the ell-th and (ell+1)-th order
    statistics and the upper fourth between the k-th and (k-1)-th, with
    ell = floor(n/4 + 5/12), k = n - ell + 1.  For n = 2, ell is 0 and the
    missing order statistic is clamped to the nearest existing one.
    """
    arr = _as_sample(values)
    n = arr.size
    if n < 2:
        raise ValueError("sample too small")
    s = np.sort(arr)
    ell, k, h = fourths_positions(n)
    lo = s[max(ell, 1) - 1]
    hi = s[min(k, n) - 1]
    q1 = (1 - h) * lo + h * s[ell]
    q2 = (1 - h) * hi + h * s[k - 2]
    return IdealFourths(float(q1), float(q2))


def mad(values: Sequence[float]) -> float:
    arr = _as_sample(values)
    return median(np.abs(arr - median(arr)))


def _check_pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = _as_sample(x, "x")
    y = _as_sample(y, "y")
    if x.size != y.size:
        raise ValueError("x and y differ in length")
    if x.size < 3:
        raise ValueError("too few rows")
    return x, y


def _pearson_unchecked(x: np.ndarray, y: np.ndarray) -> float:
    dx = x - math.fsum(x) / x.size
    dy = y - math.fsum(y) / y.size
    sxx = math.fsum(dx * dx)
    syy = math.fsum(dy * dy)
    if sxx <= 0.0 or syy <= 0.0:
        raise ValueError("degenerate variance")
    r = math.fsum(dx * dy) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    x, y = _check_pair(x, y)
    return _pearson_unchecked(x, y)


def midranks(values: Sequence[float]) -> np.ndarray:
    """Ranks starting at 1, tied values sharing the mean of their positions."""
    return stats.rankdata(_as_sample(values), method="average")


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    x, y = _check_pair(x, y)
    return _pearson_unchecked(midranks(x), midranks(y))


def beta_cdf(x: float, a: float, b: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if not (a > 0 and b > 0):
        raise ValueError("beta parameters must be positive")
    if not (0.0 <= x <= 1.0):
        raise ValueError("x must lie in [0, 1]")
    return float(special.betainc(a, b, x))


def chi_square_quantile(prob: float, df: int) -> float:
    if not (0.0 < prob < 1.0):
        raise ValueError("prob must lie in (0, 1)")
    if int(df) != df or df < 1:
        raise ValueError("df must be a positive integer")
    return float(stats.chi2.ppf(prob, df))


@lru_cache(maxsize=256)
def _hd_weights_cached(size: int, q: float) -> np.ndarray:
    a = (size + 1) * q
    b = (size + 1) * (1 - q)
    grid = np.arange(size + 1) / size
    cdf = special.betainc(a, b, grid)
    w = np.diff(cdf)
    w.setflags(write=False)
    return w


def hd_weights(size: int, q: float) -> np.ndarray:
    """Harrell-Davis weights W_1..W_size for quantile q."""
    if size < 2:
        raise ValueError("Harrell-Davis needs at least two values")
    if not (0.0 < q < 1.0):
        raise ValueError("degenerate quantile")
    return _hd_weights_cached(int(size), float(q))


def harrell_davis(values: Sequence[float], q: float | Quantile) -> float:
    if isinstance(q, Quantile):
        q = q.q
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size < 2:
        raise ValueError("Harrell-Davis needs at least two values")
    if np.any(np.isnan(arr)):
        raise ValueError("values contain NaN")
    w = hd_weights(arr.size, q)
    s = np.sort(arr)
    if np.isinf(s[-1]) or np.isinf(s[0]):
        # infinite order statistics carry strictly positive weight
        finite = np.isfinite(s)
        if np.isinf(s[-1]) and np.isinf(s[0]):
            return float("nan")
        return float(s[~finite][0])
    return math.fsum(w * s)


def harrell_davis_sorted(sorted_values: np.ndarray, q: float) -> float:
    """Harrell-Davis estimate for an already sorted, finite sample."""
    w = hd_weights(sorted_values.size, q)
    return float(np.dot(w, sorted_values))


def invert_harrell_davis(sorted_values: np.ndarray, target: float, tol: float = 1e-4,
                         lo: float = 1e-4, hi: float = 1 - 1e-4) -> float:
    """Quantile level q whose Harrell-Davis estimate is closest to ``target``.

    The estimate is nondecreasing in q, so bisection on [lo, hi] suffices.
    """
    if harrell_davis_sorted(sorted_values, lo) >= target:
        return lo
    if harrell_davis_sorted(sorted_values, hi) <= target:
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if harrell_davis_sorted(sorted_values, mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
