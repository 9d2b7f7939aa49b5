"""Shared fixtures and the acceptance summary printed after the run."""

import numpy as np
import pytest

from ri1d import energy, integrator

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def quadratic():
    return energy.quadratic_model()


@pytest.fixture(scope="session")
def double_well():
    return energy.double_well_model()


@pytest.fixture(scope="session")
def dw_local(double_well):
    return integrator.solve_local(double_well, -1.0, dt=1e-3)


@pytest.fixture(scope="session")
def quad_local(quadratic):
    return integrator.solve_local(quadratic, 0.0, dt=1e-3)


def fold_oracle():
    """Fold time, fold abscissa and landing point of the double-well run."""
    c = 2.0 / (3.0 * np.sqrt(3.0))
    roots = np.roots([1.0, 0.0, -1.0, -c])
    z = max(float(r.real) for r in roots if abs(r.imag) < 1e-9)
    return 1.0 + c, -1.0 / np.sqrt(3.0), z


@pytest.fixture(scope="session")
def fold_time():
    return fold_oracle()[0]
