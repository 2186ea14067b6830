import pytest

from cyberrep.equilibrium import GLOBAL_AVERAGE, ModelParams, solve

ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture(scope="session")
def global_eq():
    return solve(GLOBAL_AVERAGE)


@pytest.fixture(scope="session")
def saturated_eq():
    return solve(ModelParams(M=1.0, l=1.52, r=0.39, sigma=4.1))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
