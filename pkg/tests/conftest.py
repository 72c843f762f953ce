import numpy as np
import pytest

from vtube.geometry import TubeSpec

# filled by test_acceptance; printed once at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def main_tube():
    return TubeSpec(np.array([0.0, 0.0]), np.array([500.0, 0.0]), 150.0)


@pytest.fixture
def small_tube():
    return TubeSpec(np.array([0.0, 0.0]), np.array([500.0, 0.0]), 50.0)
