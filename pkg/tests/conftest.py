import sys
from pathlib import Path

import pytest

from stepforge.env import Statement, ToyEnv

ROOT = Path(__file__).resolve().parent.parent

# criterion number -> (title, passed)
_CRITERIA: dict[int, tuple[str, bool]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    ok = report.passed or report.skipped
    if report.when == "call" or not ok:
        prev = _CRITERIA.get(number, (title, True))[1]
        _CRITERIA[number] = (title, prev and ok)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_CRITERIA):
        title, ok = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {title}")


@pytest.fixture
def env():
    return ToyEnv()


@pytest.fixture
def stmt():
    def make(goal: str, sid: str = "t", negation: str | None = None) -> Statement:
        return Statement(sid, goal, negation, "test")

    return make


@pytest.fixture
def python_exe():
    return sys.executable
