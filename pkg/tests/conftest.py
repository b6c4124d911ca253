import json
import time
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from uhplasma.sweep import blowup_plane

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

DATA = Path(__file__).parent / "data"
_ACCEPTANCE: dict[str, tuple[str, str]] = {}


@pytest.fixture(scope="session")
def oracles():
    return json.loads((DATA / "oracles.json").read_text())


@pytest.fixture(scope="session")
def pulse_planes():
    """Blow-up planes for k = 0.6, 0.7, 0.8 at the default ranges, with build times."""
    planes, seconds = {}, {}
    for k in (0.6, 0.7, 0.8):
        t0 = time.perf_counter()
        planes[k] = blowup_plane(k, workers=None)
        seconds[k] = time.perf_counter() - t0
    return planes, seconds


@pytest.fixture
def criterion(request):
    """Register an acceptance criterion title for the end-of-run summary."""

    def register(number: int, title: str):
        _ACCEPTANCE[request.node.nodeid] = (f"{number:>2}", title)

    return register


def pytest_runtest_logreport(report):
    if report.nodeid in _ACCEPTANCE and report.when == "call":
        num, title = _ACCEPTANCE[report.nodeid]
        _ACCEPTANCE[report.nodeid] = (num, title, "PASS" if report.passed else "FAIL")


def pytest_terminal_summary(terminalreporter):
    rows = [v for v in _ACCEPTANCE.values() if len(v) == 3]
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for num, title, verdict in sorted(rows):
        terminalreporter.write_line(f"criterion {num}: {verdict}  {title}")
