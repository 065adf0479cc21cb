import pytest

from cmslab import presets
from cmslab.dynamics import estimate_invariant_measure


@pytest.fixture(scope="session")
def decimal_uniform():
    return presets.load_preset("decimal-uniform")


@pytest.fixture(scope="session")
def decimal_weighted():
    return presets.load_preset("decimal-weighted")


@pytest.fixture(scope="session")
def example3():
    return presets.load_preset("example3")


@pytest.fixture(scope="session")
def gmeasure():
    return presets.load_preset("gmeasure-2symbol")


@pytest.fixture(scope="session")
def mu_uniform(decimal_uniform):
    return estimate_invariant_measure(decimal_uniform, 100_000, seed=0, rate=0.1)


@pytest.fixture(scope="session")
def mu_weighted(decimal_weighted):
    return estimate_invariant_measure(decimal_weighted, 100_000, seed=0, rate=0.1)


@pytest.fixture(scope="session")
def mu_example3(example3):
    return estimate_invariant_measure(example3, 20_000, seed=0, rate=45 / 48)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
