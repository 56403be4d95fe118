import numpy as np
import pytest

from flexatt.scenario import example_scenario
from flexatt.sim import run_scenario


@pytest.fixture(scope="session")
def example():
    scen = example_scenario()
    return scen, scen.synthesize_design()


@pytest.fixture(scope="session")
def example_run(example):
    """Full 800 s example at dt = 1e-3 (shared: it takes several seconds)."""
    scen, design = example
    return run_scenario(scen, design)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def certified():
    from flexatt.scenario import certified_scenario
    scen = certified_scenario()
    design = scen.synthesize_design()
    return scen, design, run_scenario(scen, design)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
