import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from kinefp.core import GridSpec, ModelParams, PhaseGrid, gaussian_bump, gaussian_phase_density

settings.register_profile("kinefp", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("kinefp")


@pytest.fixture(scope="session")
def params():
    return ModelParams()


@pytest.fixture(scope="session")
def grid1():
    """The 64 x 64 phase grid, T = 0.5 in 60 steps."""
    return PhaseGrid(GridSpec(), 1)


@pytest.fixture(scope="session")
def small_grid():
    return PhaseGrid(GridSpec(4.0, 4.0, 32, 32, 0.3, 20), 1)


@pytest.fixture(scope="session")
def data1(grid1):
    p0 = gaussian_phase_density(grid1, -1.0, 0.5, 0.5, 0.5)
    c0 = gaussian_bump(grid1, 1.5, 1.0, 1.0)
    return p0, c0


@pytest.fixture(scope="session")
def baseline(params, grid1, data1):
    from kinefp.picard import run_scheme
    return run_scheme(params, grid1, *data1)


def random_density(rng: np.random.Generator, grid: PhaseGrid, blobs: int = 2) -> np.ndarray:
    p = np.zeros(grid.shape)
    for _ in range(blobs):
        p += gaussian_phase_density(grid, rng.uniform(-1.5, 1.5, grid.dim), rng.uniform(-1.5, 1.5, grid.dim),
                                    rng.uniform(0.3, 0.9), rng.uniform(0.3, 0.9), rng.uniform(0.1, 1.0))
    return p


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
