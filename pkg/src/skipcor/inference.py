"""Hypothesis tests on skipped correlations with family-wise error control.

Methods
-------
SS / SP   T_max test; null distribution from bootstrapping each column
          independently (Spearman / Pearson).
ECP       per-pair percentile-bootstrap p-values compared with a simulated
          critical p-value (minimum null p-value quantile).
H         Hochberg's step-up procedure on the raw percentile-bootstrap p-values.
H1        Hochberg on p-values adjusted through simulated single-test null
          distributions (tables at design sizes 30, 60, 80, 100).
L / L3    the regression analogues of ECP / H1: association of a dependent
          variable with each predictor, outliers removed on the joint cloud.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _kernels, rng as rngmod
from .calibration import CalibrationTable, TableStore, adjustment_design
from .core_stats import harrell_davis, harrell_davis_sorted, invert_harrell_davis
from .errors import BootstrapDegeneracyError, CalibrationError
from .outliers import DetectionRule, as_data_matrix
from .skipped import (
    EstimatorKind,
    pair_indices,
    skipped_association_with,
    skipped_correlation_matrix,
    t_statistics,
)

BISECTION_TOL = 1e-4


@dataclass(frozen=True)
class BootstrapConfig:
    B: int = 500
    seed: int = 0
    max_retries: int = 50

    def __post_init__(self):
        if self.B < 2:
            raise ValueError("B must be at least 2")
        if self.max_retries < 0:
            raise ValueError("max_retries must be nonnegative")


@dataclass
class HypothesisResult:
    index: tuple[int, ...]
    estimate: float
    reject: bool
    statistic: float | None = None
    p_raw: float | None = None
    p_calibrated: float | None = None
    p_adjusted: float | None = None
    ci_low: float | None = None
    ci_high: float | None = None


@dataclass
class TestReport:
    method: str
    alpha: float
    entries: list[HypothesisResult]
    critical_value: float
    critical_kind: str
    n: int
    p: int
    estimator: str
    seed: int
    B: int
    global_pvalue: float | None = None
    D: int | None = None
    table_checksums: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    n_flagged: int | None = None

    __test__ = False  # not a pytest class

    @property
    def rejections(self) -> list[bool]:
        return [e.reject for e in self.entries]

    @property
    def any_rejected(self) -> bool:
        return any(self.rejections)


# ---------------------------------------------------------------------------
# bootstrap engines


def _retry_degenerate(status: np.ndarray, out: np.ndarray, redo: Callable[[np.ndarray], int],
                      max_retries: int) -> None:
    """Re-run each degenerate resample with fresh draws until it succeeds."""
    for b in np.flatnonzero(status):
        for _ in range(max_retries):
            if redo(out[b:b + 1]) == _kernels.OK:
                break
        else:
            raise BootstrapDegeneracyError(
                f"bootstrap degeneracy: resample {b} still degenerate after {max_retries} retries "
                "(tied values make the projection spread or a retained column vanish)"
            )


def column_bootstrap_tmax(X: np.ndarray, kinds: Sequence[EstimatorKind], B: int, rng: np.random.Generator,
                          rule: DetectionRule, max_retries: int = 50) -> np.ndarray:
    """T_max of B bootstrap matrices with independently resampled columns, shape (B, len(kinds))."""
    n, p = X.shape
    codes = np.array([k.code for k in kinds], dtype=np.int64)
    gval = rule.gval(p)
    use_mad, along = rule.kernel_args
    out = np.empty((B, codes.size))
    status = np.empty(B, dtype=np.int64)
    idx = rng.integers(0, n, size=(B, n, p))
    _kernels.null_tmax_batch(X, idx, codes, gval, use_mad, along, out, status)

    def redo(slot):
        one = np.empty(1, dtype=np.int64)
        _kernels.null_tmax_batch(X, rng.integers(0, n, size=(1, n, p)), codes, gval, use_mad, along, slot, one)
        return one[0]

    _retry_degenerate(status, out, redo, max_retries)
    return out


def row_bootstrap(joint: np.ndarray, kind: EstimatorKind, B: int, rng: np.random.Generator,
                  rule: DetectionRule, max_retries: int = 50) -> np.ndarray:
    """Skipped correlations of column 0 with the other columns over B row resamples.

    Outliers are flagged once per resample on the whole cloud; shape (B, p - 1).
    """
    n, p = joint.shape
    gval = rule.gval(p)
    use_mad, along = rule.kernel_args
    out = np.empty((B, p - 1))
    status = np.empty(B, dtype=np.int64)
    idx = rng.integers(0, n, size=(B, n))
    _kernels.row_bootstrap_corr(joint, idx, kind.code, gval, use_mad, along, out, status)

    def redo(slot):
        one = np.empty(1, dtype=np.int64)
        _kernels.row_bootstrap_corr(joint, rng.integers(0, n, size=(1, n)), kind.code, gval, use_mad, along,
                                    slot, one)
        return one[0]

    _retry_degenerate(status, out, redo, max_retries)
    return out


def sign_pvalues(boot: np.ndarray) -> np.ndarray:
    """2 min(Q, 1 - Q) per column, Q the fraction of bootstrap estimates below zero."""
    Q = np.mean(boot < 0, axis=0)
    return 2 * np.minimum(Q, 1 - Q)


def clamp_pvalue(p, B: int):
    lo = 1.0 / (B + 1)
    return np.clip(p, lo, 1 - lo)


def pair_pvalues(X: np.ndarray, kind: EstimatorKind, B: int, seed: int, stream: tuple[int, ...],
                 rule: DetectionRule, max_retries: int = 50) -> np.ndarray:
    """Percentile-bootstrap p-value for every column pair, each from its own substream."""
    pairs = pair_indices(X.shape[1])
    out = np.empty(len(pairs))
    for t, (j, k) in enumerate(pairs):
        pair = np.ascontiguousarray(X[:, [j, k]])
        boot = row_bootstrap(pair, kind, B, rngmod.substream(seed, *stream, t), rule, max_retries)
        out[t] = sign_pvalues(boot)[0]
    return out


def regression_pvalues(joint: np.ndarray, kind: EstimatorKind, B: int, rng: np.random.Generator,
                       rule: DetectionRule, max_retries: int = 50) -> np.ndarray:
    return sign_pvalues(row_bootstrap(joint, kind, B, rng, rule, max_retries))


# ---------------------------------------------------------------------------
# methods SS and SP


def null_tmax_distribution(data, kind: EstimatorKind | str = EstimatorKind.PEARSON,
                           cfg: BootstrapConfig | None = None, rule: DetectionRule | None = None) -> np.ndarray:
    cfg = cfg or BootstrapConfig()
    rule = rule or DetectionRule()
    X = as_data_matrix(data)
    rng = rngmod.substream(cfg.seed, rngmod.BOOTSTRAP)
    out = column_bootstrap_tmax(X, [EstimatorKind(kind)], cfg.B, rng, rule, cfg.max_retries)
    return np.sort(out[:, 0])


def generalized_pvalue_ss(t_max_observed: float, null_sorted) -> float:
    """1 - q, where the Harrell-Davis q-quantile of the null T_max sample matches the observed T_max."""
    if math.isinf(t_max_observed):
        return 0.0
    null_sorted = np.sort(np.asarray(null_sorted, dtype=float))
    if not np.all(np.isfinite(null_sorted)):
        # infinite null values only occur at the very top; they cannot be matched
        null_sorted = np.minimum(null_sorted, np.nanmax(null_sorted[np.isfinite(null_sorted)]))
    q = invert_harrell_davis(null_sorted, t_max_observed, tol=BISECTION_TOL)
    return float(1.0 - q)


def test_ss_sp(data, kind: EstimatorKind | str = EstimatorKind.PEARSON, alpha: float = 0.05,
               cfg: BootstrapConfig | None = None, rule: DetectionRule | None = None) -> TestReport:
    kind = EstimatorKind(kind)
    _check_alpha(alpha)
    cfg = cfg or BootstrapConfig()
    rule = rule or DetectionRule()
    X = as_data_matrix(data)
    n, p = X.shape
    scm = skipped_correlation_matrix(X, kind, rule)
    T = t_statistics(scm.values, n)
    null = null_tmax_distribution(X, kind, cfg, rule)
    crit = harrell_davis(null, 1 - alpha)
    entries = [
        HypothesisResult(index=(e.j, e.k), estimate=e.value, statistic=float(t),
                         p_adjusted=generalized_pvalue_ss(abs(t), null), reject=bool(abs(t) >= crit))
        for e, t in zip(scm.estimates, T)
    ]
    return TestReport(
        method="SS" if kind is EstimatorKind.SPEARMAN else "SP",
        alpha=alpha, entries=entries, critical_value=float(crit), critical_kind="T",
        global_pvalue=generalized_pvalue_ss(float(np.max(np.abs(T))), null),
        n=n, p=p, estimator=kind.value, seed=cfg.seed, B=cfg.B, n_flagged=scm.mask.count_flagged,
    )


# ---------------------------------------------------------------------------
# percentile bootstrap, ECP, H


@dataclass(frozen=True)
class PercentileBootstrap:
    estimate: float
    ci: tuple[float, float]
    pvalue: float
    Q: float
    boot: np.ndarray


def percentile_interval(boot_sorted: np.ndarray, alpha: float) -> tuple[float, float]:
    B = boot_sorted.size
    lower = round(alpha * B / 2)  # Python rounds halves to even
    upper = B - lower
    lower = min(lower, B - 1)
    return float(boot_sorted[lower]), float(boot_sorted[max(upper - 1, lower)])


def percentile_bootstrap_pair(data, kind: EstimatorKind | str = EstimatorKind.PEARSON, alpha: float = 0.05,
                              cfg: BootstrapConfig | None = None, rule: DetectionRule | None = None,
                              stream: tuple[int, ...] = (rngmod.BOOTSTRAP, 0)) -> PercentileBootstrap:
    kind = EstimatorKind(kind)
    _check_alpha(alpha)
    cfg = cfg or BootstrapConfig()
    rule = rule or DetectionRule()
    X = as_data_matrix(data)
    if X.shape[1] != 2:
        raise ValueError("percentile_bootstrap_pair needs an n x 2 matrix")
    estimate = skipped_correlation_matrix(X, kind, rule).values[0]
    boot = row_bootstrap(X, kind, cfg.B, rngmod.substream(cfg.seed, *stream), rule, cfg.max_retries)[:, 0]
    Q = float(np.mean(boot < 0))
    boot = np.sort(boot)
    return PercentileBootstrap(float(estimate), percentile_interval(boot, alpha), 2 * min(Q, 1 - Q), Q, boot)


def hochberg(pvalues, alpha: float) -> np.ndarray:
    """Hochberg step-up: scanning p-values from largest down, stop at the first
    P_[k] <= alpha / k and reject every hypothesis with p <= alpha / k."""
    p = np.asarray(pvalues, dtype=float)
    reject = np.zeros(p.size, dtype=bool)
    for k, pk in enumerate(np.sort(p)[::-1], start=1):
        if pk <= alpha / k:
            reject = p <= alpha / k
            break
    return reject


def hochberg_adjusted(pvalues) -> np.ndarray:
    """Hochberg-adjusted p-values: reject at level alpha iff adjusted <= alpha."""
    p = np.asarray(pvalues, dtype=float)
    C = p.size
    order = np.argsort(-p, kind="stable")
    scaled = np.arange(1, C + 1) * p[order]
    adj = np.minimum.accumulate(scaled)
    out = np.empty(C)
    out[order] = np.minimum(adj, 1.0)
    return out


def _pairwise_entries(X, kind, cfg, rule, alpha):
    """Skipped estimates, percentile CIs and raw p-values for every pair."""
    entries = []
    for t, (j, k) in enumerate(pair_indices(X.shape[1])):
        res = percentile_bootstrap_pair(X[:, [j, k]], kind, alpha, cfg, rule, stream=(rngmod.BOOTSTRAP, t))
        entries.append(HypothesisResult(index=(j, k), estimate=res.estimate, p_raw=res.pvalue,
                                        ci_low=res.ci[0], ci_high=res.ci[1], reject=False))
    return entries


def critical_pvalue_ecp(table: CalibrationTable, alpha: float) -> float:
    _check_alpha(alpha)
    return harrell_davis_sorted(table.values, alpha)


def _check_table(table: CalibrationTable, mode: str, n: int, p: int) -> None:
    if table.mode != mode or table.n_design != n or table.p != p:
        raise CalibrationError(
            f"table (mode={table.mode}, n={table.n_design}, p={table.p}) does not match data "
            f"(mode={mode}, n={n}, p={p})"
        )


def test_ecp(data, alpha: float = 0.05, cfg: BootstrapConfig | None = None,
             table: CalibrationTable | None = None, rule: DetectionRule | None = None,
             kind: EstimatorKind | str = EstimatorKind.PEARSON) -> TestReport:
    if table is None:
        raise CalibrationError("method ECP needs a calibration table")
    kind = EstimatorKind(kind)
    cfg = cfg or BootstrapConfig()
    rule = rule or DetectionRule()
    X = as_data_matrix(data)
    n, p = X.shape
    _check_table(table, "pairwise", n, p)
    crit = critical_pvalue_ecp(table, alpha)
    entries = _pairwise_entries(X, kind, cfg, rule, alpha)
    for e in entries:
        e.reject = bool(e.p_raw <= crit)
    return TestReport(method="ECP", alpha=alpha, entries=entries, critical_value=crit, critical_kind="p",
                      n=n, p=p, estimator=kind.value, seed=cfg.seed, B=cfg.B, D=table.D,
                      table_checksums=[table.checksum])


def test_h(data, alpha: float = 0.05, cfg: BootstrapConfig | None = None, rule: DetectionRule | None = None,
           kind: EstimatorKind | str = EstimatorKind.PEARSON) -> TestReport:
    kind = EstimatorKind(kind)
    cfg = cfg or BootstrapConfig()
    rule = rule or DetectionRule()
    _check_alpha(alpha)
    X = as_data_matrix(data)
    n, p = X.shape
    entries = _pairwise_entries(X, kind, cfg, rule, alpha)
    raw = np.array([e.p_raw for e in entries])
    for e, rej, adj in zip(entries, hochberg(raw, alpha), hochberg_adjusted(raw)):
        e.reject, e.p_adjusted = bool(rej), float(adj)
    return TestReport(method="H", alpha=alpha, entries=entries, critical_value=alpha, critical_kind="p",
                      n=n, p=p, estimator=kind.value, seed=cfg.seed, B=cfg.B)


# ---------------------------------------------------------------------------
# calibration tables and adjusted p-values


def generate_calibration_table(n: int, p: int, D: int = 1000, cfg: BootstrapConfig | None = None,
                               mode: str = "pairwise", method: str | None = None,
                               kind: EstimatorKind | str = EstimatorKind.PEARSON,
                               rule: DetectionRule | None = None,
                               progress: Callable[[int, int], None] | None = None) -> CalibrationTable:
    """Simulate D minimum p-values under independence (standard normal data).

    pairwise: p variables, minimum over the (p^2 - p)/2 pairwise tests.
    regression: one outcome plus p predictors, minimum over the p tests.
    """
    kind = EstimatorKind(kind)
    cfg = cfg or BootstrapConfig()
    rule = rule or DetectionRule()
    if mode not in ("pairwise", "regression"):
        raise ValueError("mode must be 'pairwise' or 'regression'")
    if n < 20:
        raise ValueError("calibration tables need n >= 20")
    if (mode == "pairwise" and p < 2) or (mode == "regression" and p < 1):
        raise ValueError("too few variables for the requested mode")
    if D < 2:
        raise ValueError("D must be at least 2")
    if method is None:
        method = "H1" if mode == "regression" and p == 1 else "ECP"
    cols = p if mode == "pairwise" else p + 1
    V = np.empty(D)
    skipped = 0
    for d in range(D):
        attempt = 0
        while True:
            X = rngmod.standard_normal(rngmod.substream(cfg.seed, rngmod.TABLE_DATA, d, attempt), (n, cols))
            try:
                if mode == "pairwise":
                    pv = pair_pvalues(X, kind, cfg.B, cfg.seed, (rngmod.TABLE_BOOTSTRAP, d, attempt), rule,
                                      cfg.max_retries)
                else:
                    rng = rngmod.substream(cfg.seed, rngmod.TABLE_BOOTSTRAP, d, attempt)
                    pv = regression_pvalues(X, kind, cfg.B, rng, rule, cfg.max_retries)
            except BootstrapDegeneracyError:
                skipped += 1
                attempt += 1
                continue
            V[d] = pv.min()
            break
        if progress is not None:
            progress(d + 1, D)
    return CalibrationTable(method=method, mode=mode, n_design=n, p=p, values=V, seed=cfg.seed, B=cfg.B,
                            estimator=kind.value, skipped=skipped)


def adjusted_pvalue(p_raw: float, n: int, store: TableStore, estimator: str = "pearson") -> float:
    """Level q at which the simulated single-test null puts its Harrell-Davis quantile at p_raw."""
    design = adjustment_design(n)
    if design is None:
        return float(p_raw)
    table = store.adjustment_table(design, estimator)
    return invert_harrell_davis(table.values, float(p_raw), tol=BISECTION_TOL)


def _adjusted_hochberg(entries, n, B, alpha, store, estimator):
    raw = clamp_pvalue(np.array([e.p_raw for e in entries]), B)
    calibrated = np.array([adjusted_pvalue(v, n, store, estimator) for v in raw])
    rejects = hochberg(calibrated, alpha)
    for e, c, adj, rej in zip(entries, calibrated, hochberg_adjusted(calibrated), rejects):
        e.p_calibrated, e.p_adjusted, e.reject = float(c), float(adj), bool(rej)
    design = adjustment_design(n)
    if design is None:
        return alpha, []
    table = store.adjustment_table(design, estimator)
    return harrell_davis_sorted(table.values, alpha), [table.checksum]


def test_h1(data, alpha: float = 0.05, cfg: BootstrapConfig | None = None, store: TableStore | None = None,
            rule: DetectionRule | None = None, kind: EstimatorKind | str = EstimatorKind.PEARSON) -> TestReport:
    kind = EstimatorKind(kind)
    cfg = cfg or BootstrapConfig()
    rule = rule or DetectionRule()
    store = store if store is not None else TableStore.default()
    _check_alpha(alpha)
    X = as_data_matrix(data)
    n, p = X.shape
    notes = []
    if p > 4:
        notes.append(f"H1 is validated for p <= 4; p = {p}")
        warnings.warn(notes[-1], stacklevel=2)
    entries = _pairwise_entries(X, kind, cfg, rule, alpha)
    crit, checksums = _adjusted_hochberg(entries, n, cfg.B, alpha, store, kind.value)
    return TestReport(method="H1", alpha=alpha, entries=entries, critical_value=float(crit), critical_kind="p",
                      n=n, p=p, estimator=kind.value, seed=cfg.seed, B=cfg.B, table_checksums=checksums,
                      warnings=notes)


def _regression_inputs(y, X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    joint = as_data_matrix(np.column_stack([np.asarray(y, dtype=float), X]))
    return joint


def _regression_entries(joint, kind, cfg, rule, alpha):
    values, mask = skipped_association_with(joint[:, 0], joint[:, 1:], kind, rule)
    boot = row_bootstrap(joint, kind, cfg.B, rngmod.substream(cfg.seed, rngmod.BOOTSTRAP, 0), rule,
                         cfg.max_retries)
    pv = sign_pvalues(boot)
    boot = np.sort(boot, axis=0)
    entries = []
    for j in range(joint.shape[1] - 1):
        lo, hi = percentile_interval(boot[:, j], alpha)
        entries.append(HypothesisResult(index=(j,), estimate=float(values[j]), p_raw=float(pv[j]),
                                        ci_low=lo, ci_high=hi, reject=False))
    return entries, mask


def test_l(y, X, alpha: float = 0.05, cfg: BootstrapConfig | None = None, table: CalibrationTable | None = None,
           rule: DetectionRule | None = None, kind: EstimatorKind | str = EstimatorKind.PEARSON) -> TestReport:
    if table is None:
        raise CalibrationError("method L needs a regression-mode calibration table")
    kind = EstimatorKind(kind)
    cfg = cfg or BootstrapConfig()
    rule = rule or DetectionRule()
    _check_alpha(alpha)
    joint = _regression_inputs(y, X)
    n, q = joint.shape[0], joint.shape[1] - 1
    _check_table(table, "regression", n, q)
    crit = critical_pvalue_ecp(table, alpha)
    entries, mask = _regression_entries(joint, kind, cfg, rule, alpha)
    for e in entries:
        e.reject = bool(e.p_raw <= crit)
    return TestReport(method="L", alpha=alpha, entries=entries, critical_value=crit, critical_kind="p",
                      n=n, p=q, estimator=kind.value, seed=cfg.seed, B=cfg.B, D=table.D,
                      table_checksums=[table.checksum], n_flagged=mask.count_flagged)


def test_l3(y, X, alpha: float = 0.05, cfg: BootstrapConfig | None = None, store: TableStore | None = None,
            rule: DetectionRule | None = None, kind: EstimatorKind | str = EstimatorKind.PEARSON) -> TestReport:
    kind = EstimatorKind(kind)
    cfg = cfg or BootstrapConfig()
    rule = rule or DetectionRule()
    store = store if store is not None else TableStore.default()
    _check_alpha(alpha)
    joint = _regression_inputs(y, X)
    n, q = joint.shape[0], joint.shape[1] - 1
    notes = []
    if q > 8:
        notes.append(f"L3 is validated for at most 8 predictors; p = {q}")
        warnings.warn(notes[-1], stacklevel=2)
    entries, mask = _regression_entries(joint, kind, cfg, rule, alpha)
    crit, checksums = _adjusted_hochberg(entries, n, cfg.B, alpha, store, kind.value)
    return TestReport(method="L3", alpha=alpha, entries=entries, critical_value=float(crit), critical_kind="p",
                      n=n, p=q, estimator=kind.value, seed=cfg.seed, B=cfg.B, table_checksums=checksums,
                      warnings=notes, n_flagged=mask.count_flagged)


def _check_alpha(alpha: float) -> None:
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")
