import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from lbincidence.cohort import PrevalentRecord  # noqa: E402


def rec(total, event=True, bwd=None, cat=None):
    """Record with a given total; the split into bwd/fwd is irrelevant to the NPMLE."""
    b = total / 2 if bwd is None else bwd
    return PrevalentRecord(b, total - b, event, cat)


@pytest.fixture
def make_record():
    return rec


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
