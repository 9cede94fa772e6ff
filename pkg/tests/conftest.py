import re

import numpy as np
import pytest

from betatest.simulation import substream

# Lines collected by the acceptance suite, echoed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(re.search(r"criterion (\d+)", s).group(1))):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def gaussian_pair(n1, n2, p, index=0, seed=99):
    g = substream(seed, index)
    return g.standard_normal((n1, p)), g.standard_normal((n2, p))
