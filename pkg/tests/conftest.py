import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from blpbounds.bounds import BoundingSurface, IndexGrid
from blpbounds.dataset import Dataset
from blpbounds.support import DirectionSet

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_instance(rng, n, d, G=2, crossing_free=True, discrete=False):
    """x = (1, N(0,1)...), z = x, random band on a G-point quantile grid."""
    if discrete:
        cols = rng.integers(-2, 3, size=(n, d - 1)).astype(float)
    else:
        cols = rng.standard_normal((n, d - 1))
    ds = Dataset.from_arrays(x=cols if d > 1 else None, y=rng.standard_normal(n))
    t0 = rng.standard_normal((n, G))
    gap = np.abs(rng.standard_normal((n, G)))
    t1 = t0 + gap if crossing_free else t0 + rng.standard_normal((n, G))
    grid = IndexGrid(np.linspace(0.2, 0.8, G))
    return ds, BoundingSurface(t0, t1, grid, "synthetic")


def directions_for(d, K=16, seed=0):
    if d == 1:
        return DirectionSet.axes_pm(1)
    if d == 2:
        return DirectionSet.circle(K)
    return DirectionSet.default(d, K=K, seed=seed)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    import test_acceptance
    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(test_acceptance.RESULTS, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
