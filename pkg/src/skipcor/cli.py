"""Command-line interface: ``skipcor <command> ...``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

from . import __version__
from .calibration import ADJUSTMENT_DESIGNS, TableStore, atomic_write_text, default_cache_dir, load, save
from .dataio import (
    Dataset,
    dumps_report,
    format_report,
    ingest_csv,
    load_scenarios,
    scenario_csv,
)
from .errors import SkipcorError
from .inference import (
    BootstrapConfig,
    generate_calibration_table,
    test_ecp,
    test_h,
    test_h1,
    test_l,
    test_l3,
    test_ss_sp,
)
from .outliers import DetectionRule, detect_outliers
from .simulation import estimate_fwe
from .skipped import skipped_correlation_matrix

TABLE_FILES = {"2": "table2.json", "3": "table3.json", "4": "table4.json", "5": "table5.json"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise SkipcorError(message)


def _add_input(p):
    p.add_argument("data", help="CSV file")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--no-header", action="store_true", help="first line holds data, not names")
    p.add_argument("--missing", choices=["listwise", "fail"], default="listwise")


def _add_rule(p):
    p.add_argument("--rule", choices=["iqr", "mad"], default="iqr")
    p.add_argument("--chi-prob", type=float, default=0.95)
    p.add_argument("--projection", choices=["anchor", "point"], default="anchor")


def _add_boot(p):
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--B", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-retries", type=int, default=50)


def _add_output(p):
    p.add_argument("--output", "-o", help="write to this file instead of standard output")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="skipcor", description=__doc__)
    parser.add_argument("--version", action="version", version=f"skipcor {__version__}")
    parser.add_argument("--cache-dir", help="calibration table directory (default $SKIPCOR_CACHE_DIR "
                                            "or ~/.cache/skipcor)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("detect", help="flag multivariate outliers")
    _add_input(p)
    _add_rule(p)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    _add_output(p)

    p = sub.add_parser("corr", help="skipped correlation matrix")
    _add_input(p)
    _add_rule(p)
    p.add_argument("--estimator", choices=["pearson", "spearman"], default="pearson")
    _add_output(p)

    p = sub.add_parser("test", help="test all pairwise correlations with FWE control")
    _add_input(p)
    _add_rule(p)
    _add_boot(p)
    p.add_argument("--method", choices=["ss", "sp", "ecp", "h", "h1"], required=True)
    p.add_argument("--estimator", choices=["pearson", "spearman"], default="pearson",
                   help="for ecp, h and h1 (ss and sp fix the estimator)")
    p.add_argument("--table", help="calibration table file for ecp")
    p.add_argument("--D", type=int, help="pick the cached table with this D")
    _add_output(p)

    p = sub.add_parser("regtest", help="test a dependent variable against each predictor")
    _add_input(p)
    _add_rule(p)
    _add_boot(p)
    p.add_argument("--method", choices=["l", "l3"], required=True)
    p.add_argument("--dependent", required=True, help="name of the dependent column")
    p.add_argument("--estimator", choices=["pearson", "spearman"], default="pearson")
    p.add_argument("--table", help="calibration table file for l")
    p.add_argument("--D", type=int)
    _add_output(p)

    p = sub.add_parser("calibrate", help="simulate a calibration table into the cache")
    p.add_argument("--preset", choices=["h1"], help="all adjustment tables used by h1 and l3")
    p.add_argument("--mode", choices=["pairwise", "regression"], default="pairwise")
    p.add_argument("--method", choices=["ecp", "h1", "l3"], help="table label (default from mode and p)")
    p.add_argument("--n", type=int)
    p.add_argument("--p", type=int)
    p.add_argument("--D", type=int)
    p.add_argument("--B", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--estimator", choices=["pearson", "spearman"], default="pearson")
    p.add_argument("--force", action="store_true", help="regenerate even when cached")
    p.add_argument("--quiet", action="store_true")
    _add_rule(p)
    _add_output(p)

    p = sub.add_parser("simulate", help="run Monte Carlo scenarios from a JSON file")
    p.add_argument("--scenario", required=True)
    p.add_argument("--R", type=int, help="override the replication count")
    p.add_argument("--seed", type=int, help="override the seed")
    p.add_argument("--only", action="append", help="run only scenarios with this name")
    p.add_argument("--quiet", action="store_true")
    _add_output(p)

    p = sub.add_parser("tables", help="desk-scale analogues of the published FWE tables")
    p.add_argument("--table", choices=sorted(TABLE_FILES), action="append")
    p.add_argument("--R", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--output-dir", default=".")
    p.add_argument("--quiet", action="store_true")
    return parser


def _emit(text: str, output: str | None) -> None:
    if output:
        atomic_write_text(Path(output), text)
    else:
        sys.stdout.write(text)


def _rule(args) -> DetectionRule:
    return DetectionRule(args.rule, args.chi_prob, args.projection)


def _dataset(args) -> Dataset:
    ds = ingest_csv(args.data, delimiter=args.delimiter, header=not args.no_header, missing=args.missing)
    for w in ds.warnings:
        print(f"skipcor: warning: {w}", file=sys.stderr)
    return ds


def _store(args) -> TableStore:
    return TableStore(args.cache_dir or default_cache_dir())


def _progress(quiet):
    if quiet:
        return None

    def report(label, done, total):
        if done == total or done % max(1, total // 20) == 0:
            print(f"\r{label}: {done}/{total}", end="\n" if done == total else "", file=sys.stderr, flush=True)
    return report


def cmd_detect(args) -> None:
    ds = _dataset(args)
    mask = detect_outliers(ds.data, _rule(args))
    if args.format == "json":
        doc = {"n": ds.n, "flagged": [int(i) + 1 for i in mask.flags.nonzero()[0]],
               "count": mask.count_flagged, "rule": args.rule, "chi_prob": args.chi_prob}
        text = json.dumps(doc, sort_keys=True) + "\n"
    else:
        text = "row,outlier\n" + "".join(f"{i + 1},{int(f)}\n" for i, f in enumerate(mask.flags))
    _emit(text, args.output)


def cmd_corr(args) -> None:
    ds = _dataset(args)
    scm = skipped_correlation_matrix(ds.data, args.estimator, _rule(args))
    M = scm.matrix()
    lines = ["," + ",".join(ds.names)]
    for name, row in zip(ds.names, M):
        lines.append(name + "," + ",".join(repr(float(v)) for v in row))
    _emit("\n".join(lines) + "\n", args.output)


def _table_for(args, store, mode, n, p):
    if args.table:
        return load(args.table)
    return store.require("ECP", mode, n, p, args.D, args.estimator)


def cmd_test(args) -> None:
    ds = _dataset(args)
    cfg = BootstrapConfig(B=args.B, seed=args.seed, max_retries=args.max_retries)
    rule = _rule(args)
    m = args.method
    if m in ("ss", "sp"):
        report = test_ss_sp(ds.data, "spearman" if m == "ss" else "pearson", args.alpha, cfg, rule)
    elif m == "ecp":
        table = _table_for(args, _store(args), "pairwise", ds.n, ds.p)
        report = test_ecp(ds.data, args.alpha, cfg, table, rule, args.estimator)
    elif m == "h":
        report = test_h(ds.data, args.alpha, cfg, rule, args.estimator)
    else:
        report = test_h1(ds.data, args.alpha, cfg, _store(args), rule, args.estimator)
    _finish(report, ds.names, ds.warnings, args.output)


def cmd_regtest(args) -> None:
    ds = _dataset(args)
    y, X, names = ds.split_dependent(args.dependent)
    cfg = BootstrapConfig(B=args.B, seed=args.seed, max_retries=args.max_retries)
    rule = _rule(args)
    if args.method == "l":
        table = _table_for(args, _store(args), "regression", ds.n, X.shape[1])
        report = test_l(y, X, args.alpha, cfg, table, rule, args.estimator)
    else:
        report = test_l3(y, X, args.alpha, cfg, _store(args), rule, args.estimator)
    _finish(report, [args.dependent, *names], ds.warnings, args.output)


def _finish(report, columns, ingest_warnings, output):
    report.warnings = list(ingest_warnings) + report.warnings
    if output:
        atomic_write_text(Path(output), dumps_report(report, columns))
        sys.stdout.write(format_report(report, columns))
    else:
        sys.stdout.write(dumps_report(report, columns))


def cmd_calibrate(args) -> None:
    store = _store(args)
    rule = _rule(args)
    cfg = BootstrapConfig(B=args.B, seed=args.seed)
    if args.preset == "h1":
        jobs = [("H1", "regression", n, 1, args.D or 2000) for n in ADJUSTMENT_DESIGNS]
    else:
        if args.n is None or args.p is None:
            raise SkipcorError("calibrate needs --n and --p (or --preset h1)")
        if args.method:
            method = args.method.upper()
        else:
            method = "H1" if args.mode == "regression" and args.p == 1 else "ECP"
        D = args.D or (2000 if method in ("H1", "L3") else 1000)
        jobs = [(method, args.mode, args.n, args.p, D)]
    for method, mode, n, p, D in jobs:
        table = None if args.force else store.find(method, mode, n, p, D, args.estimator)
        if table is None:
            cb = _progress(args.quiet)
            progress = (lambda d, tot, _l=f"{method} {mode} n={n} p={p}": cb(_l, d, tot)) if cb else None
            table = generate_calibration_table(n, p, D, cfg, mode=mode, method=method, kind=args.estimator,
                                               rule=rule, progress=progress)
            store.add(table, persist=True)
        path = store.directory / store.filename(table)
        if args.output and len(jobs) == 1:
            save(table, args.output)
            path = Path(args.output)
        print(f"{path}  D={table.D}  skipped={table.skipped}  checksum={table.checksum[:16]}")


def _run_scenarios(scenarios, store, quiet) -> str:
    rows = []
    for s in scenarios:
        est = estimate_fwe(s, store=store, progress=_progress(quiet))
        for note in est.notes:
            print(f"skipcor: warning: {s.name or s.label}: {note}", file=sys.stderr)
        rows += est.rows()
    return scenario_csv(rows)


def _override(scenarios, R, seed):
    changes = {}
    if R is not None:
        changes["R"] = R
    if seed is not None:
        changes["seed"] = seed
    return [replace(s, **changes) for s in scenarios] if changes else scenarios


def cmd_simulate(args) -> None:
    scenarios = _override(load_scenarios(args.scenario), args.R, args.seed)
    if args.only:
        scenarios = [s for s in scenarios if s.name in args.only]
        if not scenarios:
            raise SkipcorError("no scenario matches --only")
    _emit(_run_scenarios(scenarios, _store(args), args.quiet), args.output)


def bundled_scenario(name: str) -> Path:
    return Path(str(resources.files("skipcor") / "scenarios" / name))


def cmd_tables(args) -> None:
    out_dir = Path(args.output_dir)
    for key in args.table or sorted(TABLE_FILES):
        scenarios = _override(load_scenarios(bundled_scenario(TABLE_FILES[key])), args.R, args.seed)
        text = _run_scenarios(scenarios, _store(args), args.quiet)
        path = out_dir / f"table{key}.csv"
        atomic_write_text(path, text)
        print(path)


COMMANDS = {"detect": cmd_detect, "corr": cmd_corr, "test": cmd_test, "regtest": cmd_regtest,
            "calibrate": cmd_calibrate, "simulate": cmd_simulate, "tables": cmd_tables}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        COMMANDS[args.command](args)
    except (SkipcorError, ValueError, OSError) as exc:
        msg = " ".join(str(exc).split())
        print(f"skipcor: error: {msg}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        print("skipcor: interrupted", file=sys.stderr)
        return 130
    return 0


if __name__ == "__main__":
    sys.exit(main())
