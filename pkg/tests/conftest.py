import numpy as np
import pytest

from alphasens import synthetic

SEED = 0


@pytest.fixture(scope="session")
def cubic_data():
    return synthetic.cubic_root_dataset(50_000, SEED)


@pytest.fixture(scope="session")
def cubic_jac(cubic_data):
    return synthetic.analytic_jacobian(synthetic.cubic_root_function(), cubic_data)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
