import numpy as np
import pytest

from isoband import MetricField, SolverConfig, TorusGrid, metric_to_beltrami, solve_periodic_beltrami
from isoband.presets import ROTATED_ANISOTROPIC


@pytest.fixture(scope="session")
def aniso_map():
    """Solved map and metric for the first rotated-anisotropic preset at 128^2."""
    grid = TorusGrid(128, 128)
    G = MetricField.from_function(grid, ROTATED_ANISOTROPIC["rotated-anisotropic-a"])
    fmap = solve_periodic_beltrami(metric_to_beltrami(G), SolverConfig())
    return fmap, G


@pytest.fixture
def rng():
    return np.random.default_rng(7)


ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance():
    """Recorder for acceptance criteria; lines are echoed in the terminal summary."""

    def record(label, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
