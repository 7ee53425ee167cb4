import numpy as np
import pytest

from trajlab.scenario import builtin_scenario
from trajlab.schedule import build_schedule


@pytest.fixture(scope="session")
def schedule():
    return build_schedule()


@pytest.fixture(scope="session")
def canonical():
    return builtin_scenario("canonical-2d")


@pytest.fixture(scope="session")
def grid8():
    return builtin_scenario("grid-8x8")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LOG = pytest.StashKey[list]()


@pytest.fixture
def acceptance_log(request):
    return request.config.stash.setdefault(ACCEPTANCE_LOG, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_LOG, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line[1])
