import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

PROBLEMS = Path(__file__).resolve().parent.parent / "problems"


@pytest.fixture
def problems_dir():
    return PROBLEMS


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
