import os

import pytest

from skipcor.calibration import ADJUSTMENT_DESIGNS, TableStore
from skipcor.inference import BootstrapConfig, generate_calibration_table

ACCEPTANCE_LINES = []


def record_acceptance(criterion: str, passed, detail: str) -> None:
    """passed=None records a skipped criterion."""
    status = "SKIP" if passed is None else "PASS" if passed else "FAIL"
    ACCEPTANCE_LINES.append(f"{status}  {criterion}: {detail}")


@pytest.fixture(scope="session")
def small_store(tmp_path_factory):
    """Adjustment tables at every design size, small D and B so unit tests stay fast."""
    store = TableStore(tmp_path_factory.mktemp("tables"))
    cfg = BootstrapConfig(B=100, seed=11)
    for n in ADJUSTMENT_DESIGNS:
        store.add(generate_calibration_table(n, 1, D=40, cfg=cfg, mode="regression"), persist=True)
    return store


@pytest.fixture(autouse=True)
def _isolated_cache(tmp_path, monkeypatch):
    monkeypatch.setenv("SKIPCOR_CACHE_DIR", str(tmp_path / "cache"))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
    mode = os.environ.get("SKIPCOR_ACCEPTANCE", "full")
    terminalreporter.write_line(f"(SKIPCOR_ACCEPTANCE={mode})")
