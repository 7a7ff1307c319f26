import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import pytest

_CRITERIA = []


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(number, ok, detail)``."""

    def record(number, ok, detail):
        line = f"ACCEPTANCE {number}: {'PASS' if ok else 'FAIL'} - {detail}"
        _CRITERIA.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_CRITERIA):
        terminalreporter.write_line(line)
