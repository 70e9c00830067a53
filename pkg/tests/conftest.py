import numpy as np
import pytest

from wpsim import BoundaryConditionSpec, Grid, Operators


@pytest.fixture
def line65():
    return Grid(((0.0, np.pi),), (65,))


def make_ops(grid, j=0, ell=0):
    bc = BoundaryConditionSpec(j, ell)
    return Operators.build(grid, bc), bc


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
