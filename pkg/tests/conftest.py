import numpy as np
import pytest

from qgarch.simulate import SimulationSpec, preset_setting, simulate_qgarch


@pytest.fixture(scope="session")
def garch_normal():
    """Setting 5.2 with normal innovations, n = 1000."""
    coef = preset_setting("5.2", "normal")
    return simulate_qgarch(SimulationSpec(coef, 1000, seed=11))


@pytest.fixture(scope="session")
def garch_tukey():
    """Setting 5.2 with Tukey-lambda innovations, n = 1000."""
    coef = preset_setting("5.2", "tukey")
    return simulate_qgarch(SimulationSpec(coef, 1000, seed=12))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
