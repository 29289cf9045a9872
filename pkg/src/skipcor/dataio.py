"""CSV ingestion, line-delimited JSON reports and scenario files.

Report schema (one JSON object per line):

    {"record": "header", "version", "method", "alpha", "critical_value",
     "critical_kind", "n", "p", "estimator", "seed", "B", "D",
     "table_checksums", "warnings", "global_pvalue", "n_flagged", "columns"}
    {"record": "hypothesis", "index", "label", "estimate", "statistic",
     "p_raw", "p_calibrated", "p_adjusted", "ci_low", "ci_high", "reject"}

Floats are written with full round-trip precision; an infinite statistic is
written as the JSON extension token Infinity.
"""

from __future__ import annotations

import csv
import enum
import io
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import atomic_write_text
from .errors import SkipcorError
from .inference import HypothesisResult, TestReport
from .outliers import DetectionRule
from .simulation import GhParams, SimulationScenario

MISSING_TOKENS = frozenset({"", "na", "nan", "null", "none", ".", "?"})


class IngestError(SkipcorError):
    pass


class MissingPolicy(str, enum.Enum):
    LISTWISE = "listwise"
    FAIL = "fail"


@dataclass
class Dataset:
    names: list[str]
    data: np.ndarray
    source: str = ""
    dependent: str | None = None
    dropped: int = 0
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise IngestError("column names must be unique")
        if len(self.names) != self.data.shape[1]:
            raise IngestError("one name per column required")
        if self.dependent is not None:
            self.column_index(self.dependent)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def p(self) -> int:
        return self.data.shape[1]

    def column_index(self, name: str) -> int:
        if name in self.names:
            return self.names.index(name)
        raise IngestError(f"no column named {name!r} (columns: {', '.join(self.names)})")

    def split_dependent(self, name: str | None = None) -> tuple[np.ndarray, np.ndarray, list[str]]:
        """(y, X, predictor names) with the dependent column removed from X."""
        name = name if name is not None else self.dependent
        if name is None:
            raise IngestError("no dependent column designated")
        j = self.column_index(name)
        keep = [k for k in range(self.p) if k != j]
        return self.data[:, j], self.data[:, keep], [self.names[k] for k in keep]


def ingest_csv(path, delimiter: str = ",", header: bool = True,
               missing: MissingPolicy | str = MissingPolicy.LISTWISE) -> Dataset:
    """Read a numeric table; rows with missing cells are dropped (LISTWISE) or rejected (FAIL)."""
    missing = MissingPolicy(missing)
    path = Path(path)
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh, delimiter=delimiter) if any(c.strip() for c in r)]
    if not rows:
        raise IngestError(f"{path}: empty file")
    if header:
        names = [c.strip() for c in rows[0]]
        body = rows[1:]
        first_line = 2
    else:
        names = [f"V{j + 1}" for j in range(len(rows[0]))]
        body = rows
        first_line = 1
    width = len(names)
    values = []
    dropped = 0
    for offset, row in enumerate(body):
        line = first_line + offset
        if len(row) != width:
            raise IngestError(f"{path}: line {line} has {len(row)} fields, expected {width}")
        parsed = []
        has_missing = False
        for j, cell in enumerate(row):
            cell = cell.strip()
            if cell.lower() in MISSING_TOKENS:
                if missing is MissingPolicy.FAIL:
                    raise IngestError(f"{path}: missing value at line {line}, column {j + 1} ({names[j]})")
                has_missing = True
                continue
            try:
                parsed.append(float(cell))
            except ValueError:
                raise IngestError(
                    f"{path}: non-numeric value {cell!r} at line {line}, column {j + 1} ({names[j]})"
                ) from None
        if has_missing:
            dropped += 1
            continue
        values.append(parsed)
    data = np.array(values, dtype=float).reshape(len(values), width)
    if width < 2:
        raise IngestError(f"{path}: need at least 2 columns, found {width}")
    if data.shape[0] < 3:
        raise IngestError(f"{path}: need at least 3 usable rows, found {data.shape[0]}")
    if not np.all(np.isfinite(data)):
        raise IngestError(f"{path}: non-finite values present")
    notes = [f"{dropped} row{'s' if dropped != 1 else ''} dropped"] if dropped else []
    return Dataset(names=names, data=data, source=str(path), dropped=dropped, warnings=notes)


# ---------------------------------------------------------------------------
# reports

_HEADER_FIELDS = ("method", "alpha", "critical_value", "critical_kind", "n", "p", "estimator", "seed", "B", "D",
                  "table_checksums", "warnings", "global_pvalue", "n_flagged")


def hypothesis_label(index, names) -> str:
    if names is None:
        return "-".join(str(i + 1) for i in index)
    return " ~ ".join(names[i] for i in index)


def report_records(report: TestReport, columns: list[str] | None = None) -> list[dict]:
    """columns names the variables of each index; for regression reports index
    refers to the predictors, with the dependent variable prepended as columns[0]."""
    head = {"record": "header", "version": __version__}
    head.update({k: getattr(report, k) for k in _HEADER_FIELDS})
    head["columns"] = list(columns) if columns is not None else None
    records = [head]
    regression = report.method in ("L", "L3")
    for e in report.entries:
        rec = {"record": "hypothesis"}
        rec.update(asdict(e))
        rec["index"] = list(e.index)
        if columns is not None:
            rec["label"] = (f"{columns[0]} ~ {columns[1 + e.index[0]]}" if regression
                            else hypothesis_label(e.index, columns))
        else:
            rec["label"] = hypothesis_label(e.index, None)
        records.append(rec)
    return records


def dumps_report(report: TestReport, columns: list[str] | None = None) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in report_records(report, columns))


def loads_report(text: str) -> tuple[TestReport, list[str] | None]:
    lines = [json.loads(ln) for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].get("record") != "header":
        raise SkipcorError("report lacks a header record")
    head = lines[0]
    entry_fields = {f.name for f in fields(HypothesisResult)}
    entries = []
    for rec in lines[1:]:
        if rec.get("record") != "hypothesis":
            raise SkipcorError(f"unexpected record type {rec.get('record')!r}")
        kw = {k: v for k, v in rec.items() if k in entry_fields}
        kw["index"] = tuple(kw["index"])
        entries.append(HypothesisResult(**kw))
    report = TestReport(entries=entries, **{k: head[k] for k in _HEADER_FIELDS})
    return report, head.get("columns")


def write_report(path, report: TestReport, columns: list[str] | None = None) -> None:
    atomic_write_text(Path(path), dumps_report(report, columns))


def format_report(report: TestReport, columns: list[str] | None = None) -> str:
    """Human-readable summary table."""
    recs = report_records(report, columns)
    head = recs[0]
    crit = f"{head['critical_value']:.6g}"
    lines = [f"method {report.method}  alpha {report.alpha:g}  n {report.n}  p {report.p}  "
             f"estimator {report.estimator}  critical {report.critical_kind} {crit}"]
    if report.global_pvalue is not None:
        lines[0] += f"  global p {report.global_pvalue:.4f}"
    cols = ("label", "estimate", "statistic", "p_raw", "p_calibrated", "p_adjusted", "ci_low", "ci_high", "reject")
    present = [c for c in cols if any(r.get(c) is not None for r in recs[1:])]
    rows = [present]
    for r in recs[1:]:
        rows.append([_fmt(r[c]) for c in present])
    widths = [max(len(row[i]) for row in rows) for i in range(len(present))]
    for row in rows:
        lines.append("  ".join(cell.rjust(w) for cell, w in zip(row, widths)))
    lines += [f"warning: {w}" for w in report.warnings]
    return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, float):
        return f"{v:.4f}"
    return "" if v is None else str(v)


# ---------------------------------------------------------------------------
# scenario files

def load_scenarios(path) -> list:
    """Scenario list from a JSON file: {"defaults": {...}, "scenarios": [{...}, ...]}."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SkipcorError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    defaults = doc.get("defaults", {})
    out = []
    for i, item in enumerate(doc.get("scenarios", [])):
        spec = {**defaults, **item}
        try:
            rule = DetectionRule(spec.pop("rule", "iqr"), spec.pop("chi_prob", 0.95),
                                 spec.pop("projection", "anchor"))
            gh = GhParams(float(spec.pop("g", 0.0)), float(spec.pop("h", 0.0)))
            if "alphas" in spec:
                spec["alphas"] = tuple(spec["alphas"])
            out.append(SimulationScenario(gh=gh, rule=rule, **spec))
        except (TypeError, ValueError) as exc:
            raise SkipcorError(f"{path}: scenario {i + 1}: {exc}") from None
    if not out:
        raise SkipcorError(f"{path}: no scenarios")
    return out


SCENARIO_COLUMNS = ("name", "method", "n", "p", "g", "h", "vp", "estimator", "rho", "alpha", "quantity",
                    "estimate", "se", "bradley", "replications", "failures", "reliable", "R", "seed", "B")


def scenario_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SCENARIO_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items() if k in SCENARIO_COLUMNS})
    return buf.getvalue()
