import os
import shutil
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

TOY_X = [[1, 0, 1], [0, 1, 1]]
TOY_Y = [0, 1]

_acceptance: dict[int, tuple[str, str]] = {}


def rc2_command() -> str | None:
    """External solver command for tests: $RULESAT_SOLVER_CMD, else RC2 if installed."""
    env = os.environ.get("RULESAT_SOLVER_CMD")
    if env:
        return env
    exe = shutil.which("rc2.py")
    return f"{exe} -vv {{wcnf}}" if exe else None


@pytest.fixture
def toy():
    from rulesat.dataset import BinaryDataset
    return BinaryDataset(TOY_X, TOY_Y, ("x1", "x2", "x3"))


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, title = mark.args
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        verdict = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[rep.outcome]
        if rep.skipped and isinstance(rep.longrepr, tuple):
            verdict += f" ({rep.longrepr[2]})"
        _acceptance[n] = (title, verdict)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_acceptance):
        title, verdict = _acceptance[n]
        terminalreporter.write_line(f"criterion {n} [{title}]: {verdict}")
