"""
Shared pytest fixtures and the --runslow switch for full-scale runs
"""
import numpy as np
import pytest

from src.core.ensemble import Ensemble
from src.core.grid import Grid2D


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="also run the full-scale acceptance experiments")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-scale experiment, skipped without --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_grid():
    """Open 4 x 3 grid on the unit square (dx = 1/3, dy = 1/2)"""
    return Grid2D(0.0, 1.0, 0.0, 1.0, 4, 3)


@pytest.fixture
def random_ensemble(rng):
    def factory(grid: Grid2D, K: int) -> Ensemble:
        return Ensemble(grid, rng.normal(size=(K,) + grid.shape))
    return factory


@pytest.fixture(autouse=True)
def _reset_package_console_handler():
    """Drop the CLI console handler between tests so it never holds a closed captured stream"""
    import logging
    yield
    logger = logging.getLogger("src")
    for handler in [h for h in logger.handlers if getattr(h, "_console", False)]:
        logger.removeHandler(handler)
