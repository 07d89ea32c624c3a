import numpy as np
import pytest

from lozenge.dynamics import DYN_II, Engine
from lozenge.tiling import new_torus


def random_state(L=8, rho=(1 / 3, 1 / 3), seed=0, moves=20, kind=DYN_II):
    """Torus state after ``moves`` DynII moves per particle from the staircase."""
    eng = Engine(new_torus(L, rho), kind, seed=seed)
    eng.run_per_particle(moves)
    return eng.state


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long Monte Carlo runs")


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.LINES:
        terminalreporter.write_line(line)
