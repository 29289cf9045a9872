"""Acceptance criteria, each checked at its stated tolerance.

SKIPCOR_ACCEPTANCE=full (default) runs everything, roughly 45-60 minutes on
one core.  SKIPCOR_ACCEPTANCE=smoke skips the long Monte Carlo criteria (2,
4 at D=2000, 5) and keeps the rest.  Calibration tables are cached in
SKIPCOR_ACCEPTANCE_CACHE (default: .acceptance-cache next to this directory)
and verified by checksum on reuse.
"""

import csv
import io
import itertools
import json
import math
import os
from pathlib import Path

import numpy as np
import pytest

from skipcor import cli
from skipcor.calibration import TableStore
from skipcor.core_stats import harrell_davis_sorted, hd_weights, ideal_fourths
from skipcor.inference import BootstrapConfig, generate_calibration_table, hochberg
from skipcor.outliers import Projection, marginal_medians, projection_distances
from skipcor.simulation import GhParams, SimulationScenario, bradley_check, estimate_fwe, gh_deviate

from conftest import record_acceptance
from oracles import brute_projection_distances, hd_weights_quadrature, step_up_literal

MODE = os.environ.get("SKIPCOR_ACCEPTANCE", "full")
CACHE = Path(os.environ.get("SKIPCOR_ACCEPTANCE_CACHE", Path(__file__).resolve().parent.parent / ".acceptance-cache"))



def require_full(label):
    if MODE == "smoke":
        record_acceptance(label, None, "long Monte Carlo criterion; run with SKIPCOR_ACCEPTANCE=full")
        pytest.skip("long Monte Carlo criterion; SKIPCOR_ACCEPTANCE=full")


@pytest.fixture(scope="module")
def store():
    return TableStore(CACHE)


def cached_table(store, n, D, seed):
    table = store.find("H1", "regression", n, 1, D)
    if table is None or table.seed != seed:
        table = generate_calibration_table(n, 1, D, BootstrapConfig(seed=seed), mode="regression")
        store.add(table, persist=True)
    return table


def run_cli(argv, capsys):
    code = cli.main(argv)
    captured = capsys.readouterr()
    assert code == 0, captured.err
    return captured.out


# 1 ---------------------------------------------------------------------------

def test_criterion_1_outside_rate(tmp_path, capsys):
    doc = {"defaults": {"method": "OUT", "p": 2, "R": 2000, "seed": 101, "rule": "iqr"},
           "scenarios": [{"name": "n10", "n": 10}, {"name": "n200", "n": 200}]}
    path = tmp_path / "out.json"
    path.write_text(json.dumps(doc))
    rows = list(csv.DictReader(io.StringIO(run_cli(["simulate", "--scenario", str(path), "--quiet"], capsys))))
    rates = {r["name"]: float(r["estimate"]) for r in rows}
    ok10 = abs(rates["n10"] - 0.043) <= 0.01
    ok200 = abs(rates["n200"] - 0.038) <= 0.01
    record_acceptance("1 outside rate", ok10 and ok200,
                      f"n=10 {rates['n10']:.4f} (target 0.043 +/-0.01), n=200 {rates['n200']:.4f} (target 0.038 +/-0.01)")
    assert ok10 and ok200


# 2 ---------------------------------------------------------------------------

# reference FWE values at alpha=0.05, n=20, p=4
TABLE2 = {("SP", 0.0, 0.0): 0.058, ("SS", 0.0, 0.0): 0.048,
          ("SP", 0.0, 0.5): 0.060, ("SS", 0.0, 0.5): 0.055,
          ("SP", 0.5, 0.0): 0.064, ("SS", 0.5, 0.0): 0.056,
          ("SP", 0.5, 0.5): 0.050, ("SS", 0.5, 0.5): 0.050}


def test_criterion_2_table2():
    require_full("2 Table 2 SS/SP")
    lines = []
    ok = True
    for (method, g, h), target in TABLE2.items():
        s = SimulationScenario(n=20, p=4, method=method, gh=GhParams(g, h), alphas=(0.05,), R=2000, seed=202)
        est = estimate_fwe(s)
        value = est.at(0.05)
        good = abs(value - target) <= 0.015 and est.reliable
        ok &= good
        lines.append(f"{method}(g={g},h={h}) {value:.4f} vs {target:.3f}{'' if good else ' X'}")
    record_acceptance("2 Table 2 SS/SP", ok, "; ".join(lines))
    assert ok


# 3 ---------------------------------------------------------------------------

def test_criterion_3_percentile_bootstrap_level():
    require_full("3 percentile bootstrap level")
    s = SimulationScenario(n=40, p=2, method="PB", alphas=(0.05,), R=2000, seed=303)
    est = estimate_fwe(s)
    rate = est.at(0.05)
    ok = 0.015 <= rate <= 0.036
    record_acceptance("3 percentile bootstrap level", ok, f"{rate:.4f} (range [0.015, 0.036], SE {est.se_at(0.05):.4f})")
    assert ok


# 4 ---------------------------------------------------------------------------

TABLE_SEED = 404  # adjustment tables shared by criteria 4 and 5
TRAJECTORY = {30: 0.087, 80: 0.076, 100: 0.062, 120: 0.049}


def _trajectory(store, D, tol, label):
    values = {}
    for n, target in TRAJECTORY.items():
        table = cached_table(store, n, D, seed=TABLE_SEED)
        values[n] = harrell_davis_sorted(table.values, 0.05)
    ok = all(abs(values[n] - t) <= tol for n, t in TRAJECTORY.items())
    detail = ", ".join(f"n={n} {values[n]:.4f} vs {t:.3f}" for n, t in TRAJECTORY.items())
    record_acceptance(label, ok, f"{detail} (tol {tol})")
    return ok


def test_criterion_4_critical_p_trajectory(store):
    require_full("4 critical p trajectory D=2000")
    assert _trajectory(store, 2000, 0.015, "4 critical p trajectory D=2000")


def test_criterion_4_smoke(store):
    assert _trajectory(store, 500, 0.03, "4 critical p trajectory D=500 smoke")


# 5 ---------------------------------------------------------------------------

def test_criterion_5_l3(store):
    require_full("5 Table 5 L3")
    for n in (30, 60):
        cached_table(store, n, 2000, seed=TABLE_SEED)
    results = {}
    for p, n, target in ((3, 30, 0.057), (7, 50, 0.078)):
        s = SimulationScenario(n=n, p=p, method="L3", alphas=(0.05,), R=2000, seed=515, D=2000)
        results[(p, n)] = (estimate_fwe(s, store=store, generate_missing=False), target)
    parts = []
    ok = True
    for (p, n), (est, target) in results.items():
        v = est.at(0.05)
        good = abs(v - target) <= 0.015
        ok &= good
        parts.append(f"p={p},n={n} {v:.4f} vs {target:.3f}")
    flagged = not bradley_check(results[(7, 50)][0].at(0.05), 0.05)
    ok &= flagged
    parts.append(f"Bradley violation at p=7,n=50: {flagged}")
    record_acceptance("5 Table 5 L3", ok, "; ".join(parts))
    assert ok


# 6 ---------------------------------------------------------------------------

def test_criterion_6_oracles():
    checks = {}
    rng = np.random.default_rng(606)
    worst = 0.0
    done = 0
    while done < 1000:
        n = int(rng.integers(3, 9))
        X = rng.normal(size=(n, 2))
        c = marginal_medians(X)
        i = int(rng.integers(0, n))
        if np.all(X[i] == c):
            continue
        for projection in Projection:
            ref = brute_projection_distances([tuple(r) for r in X], i, projection is Projection.ANCHOR_LINE)
            worst = max(worst, float(np.max(np.abs(projection_distances(X, c, i, projection) - ref))))
        done += 1
    checks["projection"] = worst < 1e-12

    hd_err = max(float(np.max(np.abs(hd_weights(size, q) - hd_weights_quadrature(size, q))))
                 for size in (2, 7, 50, 200) for q in (0.05, 0.5, 0.95))
    checks["harrell-davis"] = hd_err < 1e-8

    grid = [0.0, 0.005, 0.0125, 0.02, 0.025, 0.04, 0.05, 0.5]
    checks["hochberg"] = all(
        list(hochberg(perm, 0.05)) == step_up_literal(list(perm), 0.05)
        for C in range(1, 5) for combo in itertools.combinations_with_replacement(grid, C)
        for perm in set(itertools.permutations(combo)))

    fourths = {5: (5 / 3, 13 / 3), 12: (41 / 12, 115 / 12), 13: (11 / 3, 31 / 3)}
    checks["ideal fourths"] = all(
        np.allclose(tuple(vars(ideal_fourths(range(1, n + 1))).values()), v, atol=1e-12) for n, v in fourths.items())

    zs = np.linspace(-5, 5, 2001)
    mono = all(np.all(np.diff(gh_deviate(zs, GhParams(g, h))) > 0) for g in (0, 0.2, 0.5, 1) for h in (0, 0.2, 0.5))
    points = (gh_deviate(1.0, GhParams(0.5, 0)) == pytest.approx((math.exp(0.5) - 1) / 0.5)
              and gh_deviate(0.0, GhParams(0.5, 0.5)) == 0
              and gh_deviate(1.3, GhParams(0, 0)) == 1.3
              and gh_deviate(2.0, GhParams(0, 0.5)) == pytest.approx(2 * math.exp(1.0)))
    checks["g-and-h"] = bool(mono and points)

    ok = all(checks.values())
    record_acceptance("6 oracle suites", ok, ", ".join(f"{k} {'ok' if v else 'FAILED'}" for k, v in checks.items())
                      + f" (projection max err {worst:.1e}, HD max err {hd_err:.1e})")
    assert ok


# 7 ---------------------------------------------------------------------------

def test_criterion_7_reading_data(capsys, tmp_path):
    path = os.environ.get("SKIPCOR_READING_DATA")
    if not path:
        record_acceptance("7 illustration replay", None, "set SKIPCOR_READING_DATA to the reading-ability CSV")
        pytest.skip("reading-ability data not supplied (SKIPCOR_READING_DATA)")
    from skipcor.dataio import ingest_csv
    from skipcor.inference import test_ecp
    from skipcor.skipped import skipped_correlation_matrix

    ds = ingest_csv(path)
    est = skipped_correlation_matrix(ds.data).values
    ok_est = np.allclose(est, [0.69, -0.35, -0.55], atol=0.01)
    table = generate_calibration_table(ds.n, ds.p, 1000, BootstrapConfig(seed=707))
    rep = test_ecp(ds.data, 0.05, BootstrapConfig(seed=707), table)
    pattern = [e.reject for e in rep.entries]
    ok = ok_est and pattern == [True, False, True] and abs(rep.critical_value - 0.026) <= 0.01
    record_acceptance("7 illustration replay", ok,
                      f"estimates {np.round(est, 3).tolist()}, decisions {pattern}, p_alpha {rep.critical_value:.4f}")
    assert ok


# 8 ---------------------------------------------------------------------------

def test_criterion_8_determinism(tmp_path, capsys):
    rng = np.random.default_rng(808)
    X = rng.normal(size=(25, 3))
    data = tmp_path / "d.csv"
    data.write_text("a,b,c\n" + "".join(",".join(repr(float(v)) for v in row) + "\n" for row in X))
    scen = tmp_path / "s.json"
    scen.write_text(json.dumps({"defaults": {"n": 20, "p": 3, "R": 300, "alphas": [0.05]},
                                "scenarios": [{"name": "ss", "method": "SS"}, {"name": "h", "method": "H"}]}))

    outputs = {}
    for method in ("ss", "sp", "h"):
        a = run_cli(["test", str(data), "--method", method, "--seed", "7", "--B", "200"], capsys)
        b = run_cli(["test", str(data), "--method", method, "--seed", "7", "--B", "200"], capsys)
        outputs[method] = a == b
    s1 = run_cli(["simulate", "--scenario", str(scen), "--seed", "1", "--quiet"], capsys)
    s2 = run_cli(["simulate", "--scenario", str(scen), "--seed", "1", "--quiet"], capsys)
    s3 = run_cli(["simulate", "--scenario", str(scen), "--seed", "2", "--quiet"], capsys)
    outputs["simulate"] = s1 == s2
    rows1 = list(csv.DictReader(io.StringIO(s1)))
    rows3 = list(csv.DictReader(io.StringIO(s3)))
    within = []
    for r1, r3 in zip(rows1, rows3):
        e1, e3 = float(r1["estimate"]), float(r3["estimate"])
        se = math.sqrt(float(r1["se"]) ** 2 + float(r3["se"]) ** 2)
        within.append(abs(e1 - e3) <= 3 * se)
    ok = all(outputs.values()) and all(within)
    record_acceptance("8 determinism", ok, f"byte-identical {outputs}, other-seed within 3 SE {within}")
    assert ok
