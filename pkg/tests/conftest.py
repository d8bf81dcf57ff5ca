import numpy as np
import pytest

from surfstefan import geometry, solver
from surfstefan.enthalpy import EnthalpyRegularization, enthalpy_from_temperature
from surfstefan.spaces import SpaceTimeField


@pytest.fixture(scope="session")
def sphere2():
    return geometry.icosphere(2)


@pytest.fixture(scope="session")
def sphere3():
    return geometry.icosphere(3)


def freezing_spec(traj, eps=0.05, f=None, shift=0.0):
    u0 = -0.5 + traj.reference.vertices[:, 2]
    e0 = enthalpy_from_temperature(u0) + shift
    f = SpaceTimeField.constant(traj, 0.0) if f is None else f
    return solver.StefanProblemSpec(traj, f, e0, EnthalpyRegularization(eps))


@pytest.fixture(scope="session")
def freezing_traj(sphere3):
    return geometry.FlowTrajectory.stationary(sphere3, geometry.uniform_time_grid(0.5, 32))


@pytest.fixture(scope="session")
def freezing_solution(freezing_traj):
    return solver.solve_stefan(freezing_spec(freezing_traj))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
