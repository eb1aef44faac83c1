import re

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mvsim.spectral import Grid

settings.register_profile(
    "mvsim", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("mvsim")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def grid16():
    return Grid(16)


@pytest.fixture
def grid32():
    return Grid(32)



_CRITERIA = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line per acceptance criterion for the run summary.

    The criterion number comes from the test name (``test_criterion_<n>_...``);
    a test that raises before recording is reported as a failure.
    """
    number = int(re.search(r"criterion_(\d+)", request.node.name).group(1))
    table = request.config.stash.setdefault(_CRITERIA, {})

    def record(passed, detail):
        line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}"
        table[number] = line
        print(line)
        return passed

    yield record
    if number not in table:
        record(False, "raised before a result was recorded")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    table = config.stash.get(_CRITERIA, {})
    if table:
        terminalreporter.section("acceptance criteria")
        for number in sorted(table):
            terminalreporter.write_line(table[number])
