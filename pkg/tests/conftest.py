import numpy as np
import pytest

from quatmotion import rotcore


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_unit_quats(rng, n):
    return rotcore.normalize(rng.normal(size=(n, 4)))


@pytest.fixture
def unit_quats(rng):
    return random_unit_quats(rng, 1000)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1][1:])):
            terminalreporter.write_line(line)
