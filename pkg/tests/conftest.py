import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from splinediff.signals import SampleSeries, TimeGrid

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def grid_strategy(min_knots=4, max_knots=12, lo=0.05, hi=2.0):
    """Strictly increasing knots starting at 0 with interval ratios of at most ``hi/lo``."""
    return st.lists(st.floats(lo, hi), min_size=min_knots - 1, max_size=max_knots - 1).map(
        lambda h: TimeGrid(np.concatenate([[0.0], np.cumsum(h)])))


def random_grid(rng, K, h=0.1):
    return TimeGrid(np.concatenate([[0.0], np.cumsum(rng.uniform(0.5 * h, 1.5 * h, K - 1))]))


def random_series(rng, K, h=0.1, sigma=0.01):
    grid = random_grid(rng, K, h)
    t = grid.knots
    y = np.sin(2 * t) + t**2 + sigma * rng.standard_normal(K)
    return SampleSeries(grid, y)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one line per acceptance criterion, printed after the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
