"""Null-data generators and the Monte Carlo FWE / power estimator.

Replication r draws its data from substream (seed, DATA, r) and its bootstrap
samples from (seed, BOOTSTRAP, r, ...), so any replication can be rerun in
isolation and scenarios with the same seed see the same datasets.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from . import _kernels, rng as rngmod
from .calibration import (
    CalibrationTable,
    TableStore,
    adjustment_design,
)
from .core_stats import harrell_davis_sorted
from .errors import (
    BootstrapDegeneracyError,
    BoundaryCorrelationError,
    DegenerateSampleError,
    ZeroSpreadError,
)
from .inference import (
    BootstrapConfig,
    adjusted_pvalue,
    clamp_pvalue,
    column_bootstrap_tmax,
    generate_calibration_table,
    hochberg,
    pair_pvalues,
    regression_pvalues,
)
from .outliers import DetectionRule
from .skipped import EstimatorKind, pair_indices, skipped_correlation_matrix, t_statistics

# failures a replication may hit; anything else propagates
REPLICATION_FAILURES = (ZeroSpreadError, DegenerateSampleError, BootstrapDegeneracyError, BoundaryCorrelationError)
UNRELIABLE_FAILURE_RATE = 0.01


@dataclass(frozen=True)
class GhParams:
    g: float = 0.0
    h: float = 0.0

    def __post_init__(self):
        if not (self.g >= 0 and self.h >= 0) or math.isinf(self.g) or math.isinf(self.h):
            raise ValueError("g and h must be finite and nonnegative")

    @property
    def label(self) -> str:
        return f"g={self.g:g},h={self.h:g}"


class VariancePattern(str, enum.Enum):
    VP1 = "VP1"
    VP2 = "VP2"
    VP3 = "VP3"

    def multiplier(self, x1):
        x1 = np.asarray(x1, dtype=float)
        if self is VariancePattern.VP1:
            return np.ones_like(x1)
        if self is VariancePattern.VP2:
            return np.abs(x1) + 1
        return 1 / (np.abs(x1) + 1)


def gh_deviate(z, params: GhParams):
    """g-and-h transform of standard normal z; works elementwise on arrays."""
    z = np.asarray(z, dtype=float)
    with np.errstate(over="ignore"):
        tail = np.exp(params.h * z * z / 2)
        if params.g == 0:
            w = z * tail
        else:
            w = np.expm1(params.g * z) / params.g * tail
    return w if w.ndim else float(w)


def sample_gh_matrix(n: int, p: int, params: GhParams, rng: np.random.Generator) -> np.ndarray:
    return gh_deviate(rngmod.standard_normal(rng, (n, p)), params)


def apply_variance_pattern(x1, eps, vp: VariancePattern | str):
    x1 = np.asarray(x1, dtype=float)
    eps = np.asarray(eps, dtype=float)
    if x1.shape != eps.shape:
        raise ValueError("x1 and eps must have equal lengths")
    return VariancePattern(vp).multiplier(x1) * eps


def sample_correlated_normal(n: int, p: int, common_rho: float, rng: np.random.Generator) -> np.ndarray:
    """Rows from N(0, R) with unit variances and every correlation equal to common_rho."""
    if p < 1:
        raise ValueError("p must be positive")
    lower = -1.0 / (p - 1) if p > 1 else -math.inf
    if not (lower < common_rho < 1):
        raise ValueError(f"common correlation must lie in ({lower:g}, 1) for p={p}")
    R = np.full((p, p), float(common_rho))
    np.fill_diagonal(R, 1.0)
    L = np.linalg.cholesky(R)
    return rngmod.standard_normal(rng, (n, p)) @ L.T


def bradley_check(estimate: float, alpha: float) -> bool:
    return 0.5 * alpha <= estimate <= 1.5 * alpha


# ---------------------------------------------------------------------------
# scenarios


class Method(str, enum.Enum):
    SS = "SS"
    SP = "SP"
    ECP = "ECP"
    H = "H"
    H1 = "H1"
    L = "L"
    L3 = "L3"
    PB = "PB"  # unadjusted percentile bootstrap, reject when p <= alpha
    NONE = "NONE"  # plain Student-t test of Pearson's r, no skipping, no adjustment
    OUT = "OUT"  # outside rate of the detector

    @property
    def regression(self) -> bool:
        return self in (Method.L, Method.L3)

    @property
    def default_estimator(self) -> EstimatorKind:
        return EstimatorKind.SPEARMAN if self is Method.SS else EstimatorKind.PEARSON


@dataclass(frozen=True)
class SimulationScenario:
    """One Monte Carlo cell.

    p counts variables for pairwise methods and predictors for L / L3 (the
    data then has p + 1 columns, the dependent variable first).
    """

    n: int
    p: int
    method: Method
    gh: GhParams = GhParams()
    vp: VariancePattern = VariancePattern.VP1
    alphas: tuple[float, ...] = (0.05, 0.025, 0.01)
    R: int = 2000
    common_rho: float = 0.0
    seed: int = 0
    estimator: EstimatorKind | None = None
    B: int = 500
    D: int | None = None
    rule: DetectionRule = DetectionRule()
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "vp", VariancePattern(self.vp))
        if isinstance(self.gh, (tuple, list)):
            object.__setattr__(self, "gh", GhParams(*self.gh))
        est = self.estimator if self.estimator is not None else self.method.default_estimator
        object.__setattr__(self, "estimator", EstimatorKind(est))
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        if self.R < 100:
            raise ValueError("R must be at least 100")
        if not self.alphas or not all(0 < a < 1 for a in self.alphas):
            raise ValueError("alpha levels must lie in (0, 1)")
        if self.n < 3:
            raise ValueError("n must be at least 3")
        if self.p < (1 if self.method.regression else 2) and self.method is not Method.OUT:
            raise ValueError("too few variables for the method")
        if self.vp is not VariancePattern.VP1 and self.n_columns != 2:
            raise ValueError("variance patterns are defined for bivariate data only")
        if self.common_rho != 0 and self.gh != GhParams():
            raise ValueError("correlated scenarios use normal marginals (g = h = 0)")
        if self.common_rho != 0 and self.vp is not VariancePattern.VP1:
            raise ValueError("correlated scenarios are homoscedastic")
        if self.method in (Method.ECP, Method.L) and self.n < 20:
            raise ValueError("calibration tables need n >= 20")
        if self.method in (Method.H1, Method.L3) and self.n < 20:
            raise ValueError("adjusted p-values need n >= 20")

    @property
    def n_columns(self) -> int:
        return self.p + 1 if self.method.regression else self.p

    @property
    def table_D(self) -> int:
        if self.D is not None:
            return self.D
        return 2000 if self.method in (Method.H1, Method.L3) else 1000

    @property
    def label(self) -> str:
        if self.method is Method.ECP:
            return "HS" if self.estimator is EstimatorKind.SPEARMAN else "HP"
        return self.method.value

    def data(self, r: int) -> np.ndarray:
        rng = rngmod.substream(self.seed, rngmod.DATA, r)
        if self.common_rho != 0:
            return sample_correlated_normal(self.n, self.n_columns, self.common_rho, rng)
        X = sample_gh_matrix(self.n, self.n_columns, self.gh, rng)
        if self.vp is not VariancePattern.VP1:
            X[:, 1] = apply_variance_pattern(X[:, 0], X[:, 1], self.vp)
        if not np.all(np.isfinite(X)):
            raise DegenerateSampleError("non-finite g-and-h deviate")
        return X


@dataclass
class FweEstimate:
    scenario: SimulationScenario
    alphas: tuple[float, ...]
    estimates: np.ndarray
    se: np.ndarray
    bradley: tuple[bool, ...]
    replications: int
    failures: int
    reliable: bool
    kind: str = "fwe"
    notes: list[str] = field(default_factory=list)

    def at(self, alpha: float) -> float:
        return float(self.estimates[self.alphas.index(alpha)])

    def se_at(self, alpha: float) -> float:
        return float(self.se[self.alphas.index(alpha)])

    def rows(self) -> list[dict]:
        s = self.scenario
        base = dict(name=s.name, method=s.label, n=s.n, p=s.p, g=s.gh.g, h=s.gh.h, vp=s.vp.value,
                    estimator=s.estimator.value, rho=s.common_rho, R=s.R, seed=s.seed, B=s.B)
        out = []
        for a, est, se, ok in zip(self.alphas, self.estimates, self.se, self.bradley):
            out.append(dict(base, alpha=a, quantity=self.kind, estimate=float(est), se=float(se),
                            bradley=ok if self.kind == "fwe" else "", replications=self.replications,
                            failures=self.failures, reliable=self.reliable))
        return out


def binomial_se(est: float, R: int) -> float:
    return math.sqrt(est * (1 - est) / R) if R > 0 else float("nan")


# ---------------------------------------------------------------------------
# per-replication decisions: boolean array (len(alphas), number of hypotheses)


class _Engine:
    def __init__(self, scenario: SimulationScenario, store: TableStore | None, generate_missing: bool,
                 progress: Callable[[str, int, int], None] | None):
        self.s = scenario
        self.cfg = BootstrapConfig(B=scenario.B, seed=scenario.seed)
        self.tables: list[CalibrationTable] = []
        m = scenario.method
        if m in (Method.ECP, Method.L):
            mode = "regression" if m is Method.L else "pairwise"
            table = self._table("ECP", mode, scenario.n, scenario.p, store, generate_missing, progress)
            self.tables.append(table)
            self.crit = [harrell_davis_sorted(table.values, a) for a in scenario.alphas]
        elif m in (Method.H1, Method.L3):
            design = adjustment_design(scenario.n)
            self.store = store if store is not None else TableStore()
            if design is not None:
                self.tables.append(self._table("H1", "regression", design, 1, self.store, generate_missing,
                                               progress))

    def _table(self, method, mode, n, p, store, generate_missing, progress):
        s = self.s
        est = s.estimator.value
        table = store.find(method, mode, n, p, s.table_D, est) if store is not None else None
        if table is None:
            if not generate_missing:
                # raises with instructions
                return (store or TableStore()).require(method, mode, n, p, s.table_D, est)
            cb = (lambda d, D: progress(f"{method}-{mode}-n{n}-p{p}", d, D)) if progress else None
            table = generate_calibration_table(n, p, s.table_D, BootstrapConfig(B=s.B, seed=s.seed), mode=mode,
                                               method=method, kind=s.estimator, rule=s.rule, progress=cb)
            if store is not None:
                store.add(table, persist=True)
        return table

    def decide(self, X: np.ndarray, r: int) -> np.ndarray:
        s, m = self.s, self.s.method
        alphas = np.asarray(s.alphas)
        if m in (Method.SS, Method.SP):
            scm = skipped_correlation_matrix(X, s.estimator, s.rule)
            T = np.abs(t_statistics(scm.values, s.n))
            null = column_bootstrap_tmax(X, [s.estimator], s.B, rngmod.substream(s.seed, rngmod.BOOTSTRAP, r),
                                         s.rule, self.cfg.max_retries)[:, 0]
            null.sort()
            crit = np.array([harrell_davis_sorted(null, 1 - a) for a in s.alphas])
            return T[None, :] >= crit[:, None]
        if m is Method.NONE:
            pv = []
            for j, k in pair_indices(s.p):
                res = stats.pearsonr(X[:, j], X[:, k])
                pv.append(res.pvalue)
            return np.asarray(pv)[None, :] <= alphas[:, None]
        if m.regression:
            rng = rngmod.substream(s.seed, rngmod.BOOTSTRAP, r)
            pv = regression_pvalues(X, s.estimator, s.B, rng, s.rule, self.cfg.max_retries)
        else:
            pv = pair_pvalues(X, s.estimator, s.B, s.seed, (rngmod.BOOTSTRAP, r), s.rule, self.cfg.max_retries)
        if m in (Method.ECP, Method.L):
            return pv[None, :] <= np.asarray(self.crit)[:, None]
        if m is Method.PB:
            return pv[None, :] <= alphas[:, None]
        if m is Method.H:
            return np.array([hochberg(pv, a) for a in s.alphas])
        # H1, L3
        raw = clamp_pvalue(pv, s.B)
        adj = np.array([adjusted_pvalue(v, s.n, self.store, s.estimator.value) for v in raw])
        return np.array([hochberg(adj, a) for a in s.alphas])


def _outside_rate(scenario: SimulationScenario) -> FweEstimate:
    s = scenario
    gval = s.rule.gval(s.n_columns)
    use_mad, along = s.rule.kernel_args
    flags = np.zeros(s.n, dtype=bool)
    anchors = np.ones(s.n, dtype=bool)
    fractions = []
    failures = 0
    for r in range(s.R):
        try:
            X = s.data(r)
        except DegenerateSampleError:
            failures += 1
            continue
        if _kernels.flag_outliers(X, gval, use_mad, along, flags, anchors):
            failures += 1
            continue
        fractions.append(flags.sum() / s.n)
    fr = np.asarray(fractions)
    rate = float(fr.mean())
    se = float(fr.std(ddof=1) / math.sqrt(fr.size))
    return FweEstimate(s, (float("nan"),), np.array([rate]), np.array([se]), (False,), int(fr.size), failures,
                       failures <= UNRELIABLE_FAILURE_RATE * s.R, kind="outside_rate")


def _run(scenario: SimulationScenario, reduce: Callable[[np.ndarray], np.ndarray], kind: str,
         store: TableStore | None, generate_missing: bool, progress) -> FweEstimate:
    engine = _Engine(scenario, store, generate_missing, progress)
    hits = np.zeros(len(scenario.alphas))
    done = failures = 0
    for r in range(scenario.R):
        try:
            decisions = engine.decide(scenario.data(r), r)
        except REPLICATION_FAILURES:
            failures += 1
            continue
        hits += reduce(decisions)
        done += 1
        if progress is not None:
            progress(scenario.name or scenario.label, r + 1, scenario.R)
    est = hits / done if done else np.full(len(scenario.alphas), np.nan)
    se = np.array([binomial_se(e, done) for e in est])
    notes = []
    reliable = failures <= UNRELIABLE_FAILURE_RATE * scenario.R
    if not reliable:
        notes.append(f"{failures} of {scenario.R} replications failed; estimate unreliable")
    return FweEstimate(scenario, scenario.alphas, est, se,
                       tuple(bradley_check(e, a) for e, a in zip(est, scenario.alphas)),
                       done, failures, reliable, kind=kind, notes=notes)


def estimate_fwe(scenario: SimulationScenario, store: TableStore | None = None, generate_missing: bool = True,
                 progress: Callable[[str, int, int], None] | None = None) -> FweEstimate:
    """Proportion of null replications with at least one rejection, per alpha.

    Missing calibration tables are generated from the scenario seed (and kept
    in ``store`` when one is given) unless generate_missing is False.
    """
    if scenario.method is Method.OUT:
        return _outside_rate(scenario)
    return _run(scenario, lambda d: d.any(axis=1), "fwe", store, generate_missing, progress)


def estimate_power(scenario: SimulationScenario, target: int | tuple[int, int] = (0, 1), adjust: bool = True,
                   store: TableStore | None = None, generate_missing: bool = True, progress=None) -> FweEstimate:
    """Rejection rate of one hypothesis.

    adjust=False tests the target alone with the unadjusted percentile
    bootstrap; adjust=True uses the scenario's FWE-controlling method.
    ``target`` is a column pair, or a predictor index for L / L3.
    """
    if scenario.method is Method.OUT:
        raise ValueError("power is undefined for the outside rate")
    if not adjust:
        if scenario.method.regression:
            raise ValueError("unadjusted power is defined for pairwise scenarios")
        scenario = replace(scenario, method=Method.PB, D=None)
    if scenario.method.regression:
        col = int(target if isinstance(target, (int, np.integer)) else target[0])
    else:
        col = pair_indices(scenario.p).index(tuple(sorted(target)))
    return _run(scenario, lambda d: d[:, col], "power", store, generate_missing, progress)


def required_tables(scenario: SimulationScenario) -> list[tuple]:
    """(method, mode, n_design, p, D, estimator) keys a scenario reads."""
    s = scenario
    if s.method in (Method.ECP, Method.L):
        mode = "regression" if s.method is Method.L else "pairwise"
        return [("ECP", mode, s.n, s.p, s.table_D, s.estimator.value)]
    if s.method in (Method.H1, Method.L3):
        design = adjustment_design(s.n)
        return [] if design is None else [("H1", "regression", design, 1, s.table_D, s.estimator.value)]
    return []


__all__: Sequence[str] = (
    "GhParams", "VariancePattern", "Method", "SimulationScenario", "FweEstimate", "gh_deviate",
    "sample_gh_matrix", "apply_variance_pattern", "sample_correlated_normal", "bradley_check",
    "estimate_fwe", "estimate_power", "required_tables",
)
