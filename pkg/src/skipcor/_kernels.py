"""Compiled inner loops for bootstrap and Monte Carlo work.

Each kernel mirrors a public pure-Python routine (outliers.detect_outliers,
core_stats.pearson/spearman, skipped.t_max); the test suite checks that the
two paths agree.  Kernels report degeneracy through integer status codes
rather than exceptions so callers can resample.
"""

import math

import numpy as np
from numba import njit

OK = 0
ZERO_SPREAD = 1
TOO_FEW_ROWS = 2
DEGENERATE_COLUMN = 3

PEARSON = 0
SPEARMAN = 1

# projection of each point onto the line through the center and the anchor
ALONG_ANCHOR = 0
# point-line variant: anchor vector projected onto each point's direction
ALONG_POINT = 1


@njit(cache=True)
def _median_sorted(s):
    n = s.shape[0]
    mid = n // 2
    if n % 2 == 1:
        return s[mid]
    return 0.5 * (s[mid - 1] + s[mid])


@njit(cache=True)
def _select(a, lo, hi, k):
    """Place the k-th smallest of a[lo:hi] at a[k], partitioning around it."""
    while hi - lo > 1:
        mid = (lo + hi - 1) // 2
        x, y, z = a[lo], a[mid], a[hi - 1]
        if x > y:
            x, y = y, x
        if y > z:
            y = z
            if x > y:
                y = x
        pivot = y
        i = lo
        j = hi - 1
        while i <= j:
            while a[i] < pivot:
                i += 1
            while a[j] > pivot:
                j -= 1
            if i <= j:
                a[i], a[j] = a[j], a[i]
                i += 1
                j -= 1
        if k <= j:
            hi = j + 1
        elif k >= i:
            lo = i
        else:
            return


@njit(cache=True)
def _order_stats(a, positions, out):
    """Fill out[t] with the positions[t]-th order statistic of a (destroys a).

    positions must be sorted in descending order.
    """
    upper = a.shape[0]
    for t in range(positions.shape[0]):
        k = positions[t]
        if k < upper:
            _select(a, 0, upper, k)
            upper = k
        out[t] = a[k]


@njit(cache=True)
def _lookup(positions, values, k):
    for t in range(positions.shape[0]):
        if positions[t] == k:
            return values[t]
    return np.nan


@njit(cache=True)
def _median_of(a, work):
    n = a.shape[0]
    for j in range(n):
        work[j] = a[j]
    mid = n // 2
    _select(work, 0, n, mid)
    if n % 2 == 1:
        return work[mid]
    lower = work[0]
    for j in range(1, mid):
        if work[j] > lower:
            lower = work[j]
    return 0.5 * (lower + work[mid])


@njit(cache=True)
def flag_outliers(X, gval, use_mad, along, flags, anchors):
    """Projection-type outlier flags for the rows of X, written into ``flags``.

    Only rows with anchors[i] set serve as projection anchors (duplicate rows
    define the same projection).  Returns 0, or anchor_index + 1 when some
    projection has zero spread.
    """
    n, p = X.shape
    center = np.empty(p)
    col = np.empty(n)
    work = np.empty(n)
    for c in range(p):
        for r in range(n):
            col[r] = X[r, c]
        center[c] = _median_of(col, work)
    B = np.empty((n, p))
    norm = np.empty(n)
    for r in range(n):
        acc = 0.0
        for c in range(p):
            v = X[r, c] - center[c]
            B[r, c] = v
            acc += v * v
        norm[r] = math.sqrt(acc)

    ell = int(math.floor(n / 4.0 + 5.0 / 12.0))
    h = n / 4.0 + 5.0 / 12.0 - ell
    k = n - ell + 1
    lo_idx = ell - 1 if ell >= 1 else 0
    hi_idx = k - 1 if k <= n else n - 1
    mid = n // 2
    # descending 0-based positions: hi_idx, k-2, mid, mid-1, ell, lo_idx
    positions = np.empty(6, dtype=np.int64)
    positions[0] = hi_idx
    positions[1] = k - 2
    positions[2] = mid
    positions[3] = mid - 1 if n % 2 == 0 else mid
    positions[4] = ell
    positions[5] = lo_idx
    positions = np.sort(positions)[::-1].copy()
    stats = np.empty(6)

    D = np.empty(n)
    S = np.empty(n)
    for r in range(n):
        flags[r] = False
    for i in range(n):
        if norm[i] == 0.0 or not anchors[i]:
            continue
        for j in range(n):
            dot = 0.0
            for c in range(p):
                dot += B[i, c] * B[j, c]
            if along == ALONG_ANCHOR:
                D[j] = abs(dot) / norm[i]
            elif norm[j] == 0.0:
                D[j] = 0.0
            else:
                D[j] = abs(dot) / norm[j]
        for j in range(n):
            S[j] = D[j]
        _order_stats(S, positions, stats)
        if n % 2 == 1:
            med = _lookup(positions, stats, mid)
        else:
            med = 0.5 * (_lookup(positions, stats, mid - 1) + _lookup(positions, stats, mid))
        if use_mad:
            for j in range(n):
                S[j] = abs(D[j] - med)
            spread = _median_of(S, work) / 0.6745
        else:
            q1 = (1.0 - h) * _lookup(positions, stats, lo_idx) + h * _lookup(positions, stats, ell)
            q2 = (1.0 - h) * _lookup(positions, stats, hi_idx) + h * _lookup(positions, stats, k - 2)
            spread = q2 - q1
        if not spread > 0.0:
            return i + 1
        cut = med + gval * spread
        for j in range(n):
            if D[j] > cut:
                flags[j] = True
    return 0


@njit(cache=True)
def _midranks_into(x, out, order):
    m = x.shape[0]
    for i in range(m):
        order[i] = i
    # insertion sort of indices keeps ties in input order; m is small
    for i in range(1, m):
        key = order[i]
        j = i - 1
        while j >= 0 and x[order[j]] > x[key]:
            order[j + 1] = order[j]
            j -= 1
        order[j + 1] = key
    i = 0
    while i < m:
        j = i
        while j + 1 < m and x[order[j + 1]] == x[order[i]]:
            j += 1
        rank = 0.5 * (i + j) + 1.0
        for t in range(i, j + 1):
            out[order[t]] = rank
        i = j + 1


@njit(cache=True)
def _center_scale(x, out):
    """Center x into out; return the sum of squares (0 if degenerate)."""
    m = x.shape[0]
    mean = 0.0
    for i in range(m):
        mean += x[i]
    mean /= m
    ss = 0.0
    for i in range(m):
        v = x[i] - mean
        out[i] = v
        ss += v * v
    return ss


@njit(cache=True)
def _retained_columns(X, flags, kind, work_cols, ss):
    """Centered (and ranked, for Spearman) retained columns.

    Returns (m, status)."""
    n, p = X.shape
    m = 0
    for r in range(n):
        if not flags[r]:
            m += 1
    if m < 3:
        return m, TOO_FEW_ROWS
    x = np.empty(m)
    ranks = np.empty(m)
    order = np.empty(m, dtype=np.int64)
    for c in range(p):
        t = 0
        for r in range(n):
            if not flags[r]:
                x[t] = X[r, c]
                t += 1
        if kind == SPEARMAN:
            _midranks_into(x, ranks, order)
            ss[c] = _center_scale(ranks, work_cols[c, :m])
        else:
            ss[c] = _center_scale(x, work_cols[c, :m])
        if not ss[c] > 0.0:
            return m, DEGENERATE_COLUMN
    return m, OK


@njit(cache=True)
def _corr(work_cols, ss, a, b, m):
    acc = 0.0
    for i in range(m):
        acc += work_cols[a, i] * work_cols[b, i]
    r = acc / math.sqrt(ss[a] * ss[b])
    if r > 1.0:
        r = 1.0
    elif r < -1.0:
        r = -1.0
    return r


@njit(cache=True)
def _tstat_abs(r, n):
    if abs(r) >= 1.0:
        return np.inf
    return abs(r) * math.sqrt((n - 2.0) / (1.0 - r * r))


@njit(cache=True)
def null_tmax_batch(data, idx, kinds, gval, use_mad, along, out, status):
    """T_max for column-wise bootstrap samples.

    data: (n, p); idx: (B, n, p) row indices per column; kinds: estimator codes.
    out: (B, len(kinds)) T_max values; status: (B,) codes.
    """
    n, p = data.shape
    nb = idx.shape[0]
    X = np.empty((n, p))
    flags = np.zeros(n, dtype=np.bool_)
    anchors = np.ones(n, dtype=np.bool_)
    work = np.empty((p, n))
    ss = np.empty(p)
    for b in range(nb):
        for r in range(n):
            for c in range(p):
                X[r, c] = data[idx[b, r, c], c]
        bad = flag_outliers(X, gval, use_mad, along, flags, anchors)
        if bad != 0:
            status[b] = ZERO_SPREAD
            continue
        status[b] = OK
        for t in range(kinds.shape[0]):
            m, st = _retained_columns(X, flags, kinds[t], work, ss)
            if st != OK:
                status[b] = st
                break
            best = 0.0
            for a in range(p):
                for c in range(a + 1, p):
                    v = _tstat_abs(_corr(work, ss, a, c, m), n)
                    if v > best:
                        best = v
            out[b, t] = best


@njit(cache=True)
def tmax_single(data, kinds, gval, use_mad, along, out):
    """Observed T_max for each estimator kind; returns a status code."""
    n, p = data.shape
    flags = np.zeros(n, dtype=np.bool_)
    work = np.empty((p, n))
    ss = np.empty(p)
    anchors = np.ones(n, dtype=np.bool_)
    bad = flag_outliers(data, gval, use_mad, along, flags, anchors)
    if bad != 0:
        return ZERO_SPREAD
    for t in range(kinds.shape[0]):
        m, st = _retained_columns(data, flags, kinds[t], work, ss)
        if st != OK:
            return st
        best = 0.0
        for a in range(p):
            for c in range(a + 1, p):
                v = _tstat_abs(_corr(work, ss, a, c, m), n)
                if v > best:
                    best = v
        out[t] = best
    return OK


@njit(cache=True)
def row_bootstrap_corr(data, idx, kind, gval, use_mad, along, out, status):
    """Skipped correlations of column 0 with every other column.

    Rows are resampled jointly by idx (B, n); outliers are flagged once on the
    full resampled cloud.  out: (B, p - 1).
    """
    n, p = data.shape
    nb = idx.shape[0]
    X = np.empty((n, p))
    flags = np.zeros(n, dtype=np.bool_)
    anchors = np.empty(n, dtype=np.bool_)
    seen = np.zeros(n, dtype=np.bool_)
    work = np.empty((p, n))
    ss = np.empty(p)
    for b in range(nb):
        for r in range(n):
            seen[r] = False
        for r in range(n):
            src = idx[b, r]
            anchors[r] = not seen[src]
            seen[src] = True
            for c in range(p):
                X[r, c] = data[src, c]
        bad = flag_outliers(X, gval, use_mad, along, flags, anchors)
        if bad != 0:
            status[b] = ZERO_SPREAD
            continue
        m, st = _retained_columns(X, flags, kind, work, ss)
        status[b] = st
        if st != OK:
            continue
        for c in range(1, p):
            out[b, c - 1] = _corr(work, ss, 0, c, m)
