import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

RESULTS = pytest.StashKey[list]()
CRITERIA = 9


def pytest_configure(config):
    config.stash[RESULTS] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    rows = config.stash.get(RESULTS, [])
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    seen = {num for num, _ in rows}
    for _, line in sorted(rows):
        terminalreporter.write_line(line)
    for num in range(1, CRITERIA + 1):
        if num not in seen:
            terminalreporter.write_line(f"FAIL  criterion {num}: not reported (errored or deselected)")


@pytest.fixture
def criterion(request):
    """Record a criterion's outcome, print it, and fail the test if it did not hold."""

    def record(num: int, title: str, ok: bool, detail: str = ""):
        line = f"{'PASS' if ok else 'FAIL'}  criterion {num}: {title}"
        if detail:
            line += f" [{detail}]"
        request.config.stash[RESULTS].append((num, line))
        print(line)
        assert ok, line

    return record


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
