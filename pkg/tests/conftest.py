import numpy as np
import pytest

from isg import GridConfig, get_scenario, solve_value

ACCEPTANCE_LINES: list[str] = []

# Boxes wide enough that no atom can drift off the grid before it is revealed.
WIDE_PURSUIT = dict(lo=(-4.0, 0.0), hi=(4.0, 1.6))
WIDE_SEPARATED = dict(lo=(-3.0, -3.0, 0.0), hi=(3.0, 3.0, 1.6))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def pursuit():
    return get_scenario("pursuit-1d")


@pytest.fixture(scope="session")
def separated():
    return get_scenario("separated")


@pytest.fixture(scope="session")
def pursuit_V(pursuit):
    """161 x-nodes on [-4, 4], backup step 0.05."""
    return solve_value(pursuit, GridConfig((161, 9), **WIDE_PURSUIT), 0.05, tol=1e-9)


@pytest.fixture(scope="session")
def pursuit_V_fine(pursuit):
    return solve_value(pursuit, GridConfig((321, 9), **WIDE_PURSUIT), 0.025, tol=1e-9)


@pytest.fixture(scope="session")
def separated_V(separated):
    return solve_value(separated, GridConfig((49, 49, 9), **WIDE_SEPARATED), 0.025, tol=1e-9)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
