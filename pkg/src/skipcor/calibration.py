"""Calibration tables of simulated null minimum p-values, their file format and cache.

File layout: ``key: value`` header lines, a ``---`` separator, then one value
per line in ascending order, written with ``repr`` so reading it back gives
the identical doubles.
"""

from __future__ import annotations

import hashlib
import os
import re
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CalibrationError

CACHE_ENV = "SKIPCOR_CACHE_DIR"
METHODS = ("ECP", "H1", "L3")
MODES = ("pairwise", "regression")
# design sizes of the adjustment tables and the sample sizes each one serves
ADJUSTMENT_BINS = ((20, 40, 30), (41, 70, 60), (71, 100, 80), (101, 120, 100))
ADJUSTMENT_DESIGNS = tuple(design for _, _, design in ADJUSTMENT_BINS)

_HEADER_KEYS = ("method", "mode", "n_design", "p", "D", "B", "seed", "estimator", "skipped")
_INT_KEYS = {"n_design", "p", "D", "B", "seed", "skipped"}


@dataclass(frozen=True)
class CalibrationTable:
    method: str
    mode: str
    n_design: int
    p: int
    values: np.ndarray
    seed: int
    B: int = 500
    estimator: str = "pearson"
    skipped: int = 0
    D: int = field(init=False)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown table method {self.method!r}")
        if self.mode not in MODES:
            raise ValueError(f"unknown table mode {self.mode!r}")
        values = np.sort(np.asarray(self.values, dtype=float))
        if values.size < 2:
            raise ValueError("a calibration table needs at least two values")
        if np.any(values < 0) or np.any(values > 1):
            raise ValueError("table values must lie in [0, 1]")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "D", int(values.size))

    @property
    def key(self) -> tuple:
        return (self.method, self.mode, self.estimator, self.n_design, self.p, self.D)

    def header(self) -> dict:
        return {k: getattr(self, k) for k in _HEADER_KEYS}

    @property
    def checksum(self) -> str:
        return _checksum(self.header(), [repr(float(v)) for v in self.values])


def _checksum(header: dict, value_lines: list[str]) -> str:
    h = hashlib.sha256()
    for k in _HEADER_KEYS:
        h.update(f"{k}: {header[k]}\n".encode())
    h.update("\n".join(value_lines).encode())
    return h.hexdigest()


def dumps(table: CalibrationTable) -> str:
    lines = ["# skipcor calibration table"]
    lines += [f"{k}: {v}" for k, v in table.header().items()]
    lines.append(f"checksum: {table.checksum}")
    lines.append("---")
    lines += [repr(float(v)) for v in table.values]
    return "\n".join(lines) + "\n"


def loads(text: str, source: str = "<string>") -> CalibrationTable:
    head, sep, body = text.partition("\n---\n")
    if not sep:
        raise CalibrationError(f"{source}: missing '---' separator")
    header = {}
    for line in head.splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        key, colon, value = line.partition(":")
        if not colon:
            raise CalibrationError(f"{source}: malformed header line {line!r}")
        header[key.strip()] = value.strip()
    missing = [k for k in (*_HEADER_KEYS, "checksum") if k not in header]
    if missing:
        raise CalibrationError(f"{source}: header lacks {', '.join(missing)}")
    value_lines = [ln.strip() for ln in body.splitlines() if ln.strip()]
    parsed = {k: int(header[k]) if k in _INT_KEYS else header[k] for k in _HEADER_KEYS}
    if _checksum(parsed, value_lines) != header["checksum"]:
        raise CalibrationError(f"{source}: checksum mismatch, table is corrupted")
    if len(value_lines) != parsed["D"]:
        raise CalibrationError(f"{source}: header says D={parsed['D']} but {len(value_lines)} values follow")
    values = np.array([float(v) for v in value_lines])
    if np.any(np.diff(values) < 0):
        raise CalibrationError(f"{source}: values are not sorted")
    parsed.pop("D")
    return CalibrationTable(values=values, **parsed)


def atomic_write_text(path: Path, text: str) -> None:
    """Write via a temporary sibling and rename, so readers never see a partial file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save(table: CalibrationTable, path) -> Path:
    path = Path(path)
    atomic_write_text(path, dumps(table))
    return path


def load(path) -> CalibrationTable:
    path = Path(path)
    return loads(path.read_text(), source=str(path))


def default_cache_dir() -> Path:
    env = os.environ.get(CACHE_ENV)
    if env:
        return Path(env)
    return Path.home() / ".cache" / "skipcor"


def adjustment_design(n: int) -> int | None:
    """Design size of the table used to adjust p-values at sample size n (None above 120)."""
    if n < 20:
        raise CalibrationError(f"n={n} is below the calibrated range (n >= 20)")
    for lo, hi, design in ADJUSTMENT_BINS:
        if lo <= n <= hi:
            return design
    return None


_NAME = re.compile(r"^(?P<method>\w+)-(?P<mode>\w+)-(?P<est>\w+)-n(?P<n>\d+)-p(?P<p>\d+)-D(?P<D>\d+)\.tbl$")


class TableStore:
    """Calibration tables held in memory and, optionally, in a cache directory."""

    def __init__(self, directory=None, tables=()):
        self.directory = Path(directory) if directory is not None else None
        self._tables: dict[tuple, CalibrationTable] = {}
        for t in tables:
            self.add(t)

    @classmethod
    def default(cls) -> "TableStore":
        return cls(default_cache_dir())

    def filename(self, table: CalibrationTable) -> str:
        return f"{table.method}-{table.mode}-{table.estimator}-n{table.n_design}-p{table.p}-D{table.D}.tbl"

    def add(self, table: CalibrationTable, persist: bool = False) -> None:
        self._tables[table.key] = table
        if persist and self.directory is not None:
            save(table, self.directory / self.filename(table))

    def _disk_keys(self):
        if self.directory is None or not self.directory.is_dir():
            return []
        keys = []
        for path in self.directory.iterdir():
            m = _NAME.match(path.name)
            if m:
                keys.append(((m["method"], m["mode"], m["est"], int(m["n"]), int(m["p"]), int(m["D"])), path))
        return keys

    def find(self, method: str, mode: str, n_design: int, p: int, D: int | None = None,
             estimator: str = "pearson") -> CalibrationTable | None:
        """Table for the key, or None.  With D unset, the largest available D wins."""
        stem = (method, mode, estimator, n_design, p)
        candidates = {k: t for k, t in self._tables.items() if k[:5] == stem}
        for key, path in self._disk_keys():
            if key[:5] == stem and key not in candidates:
                table = load(path)
                if table.key != key:
                    raise CalibrationError(f"{path}: contents do not match file name")
                self._tables[key] = table
                candidates[key] = table
        if D is not None:
            return candidates.get((*stem, D))
        if not candidates:
            return None
        return candidates[max(candidates, key=lambda k: k[5])]

    def require(self, method: str, mode: str, n_design: int, p: int, D: int | None = None,
                estimator: str = "pearson") -> CalibrationTable:
        table = self.find(method, mode, n_design, p, D, estimator)
        if table is None:
            d = f" --D {D}" if D else ""
            raise CalibrationError(
                f"no {method} calibration table for mode={mode}, estimator={estimator}, n={n_design}, p={p}; "
                f"generate one with `skipcor calibrate --mode {mode} --estimator {estimator} --n {n_design} "
                f"--p {p}{d}`"
            )
        return table

    def adjustment_table(self, n_design: int, estimator: str = "pearson") -> CalibrationTable:
        table = self.find("H1", "regression", n_design, 1, estimator=estimator)
        if table is None:
            raise CalibrationError(
                f"no adjustment table for design size {n_design} ({estimator}); generate the set with "
                f"`skipcor calibrate --preset h1`"
            )
        return table

    def __iter__(self):
        return iter(self._tables.values())
