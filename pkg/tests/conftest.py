import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from adaiht import find_certified_design  # noqa: E402


@pytest.fixture(scope="session")
def certified_design():
    """Near-orthogonal 600 x 30 design whose exact audit gives delta_6 <= 0.01."""
    design, report, seed = find_certified_design(600, 30, 6, 0.01, seeds=range(50))
    return design, report


_VERDICTS = {}


@pytest.fixture
def verdict():
    """Record the one-line outcome of an acceptance criterion."""
    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
        _VERDICTS[number] = line
        print(line)
    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_VERDICTS):
            terminalreporter.write_line(_VERDICTS[number])
