import numpy as np
import pytest

from mixprop.mixture import ClassPriors, TwoSampleData, gen_gaussian


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run Monte Carlo accuracy checks")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_data(rng):
    """Tiny two-sample set with an X_S column, for brute-force comparisons."""
    u = rng.normal(size=(6, 3))
    v = rng.normal(loc=0.5, size=(6, 3))
    return TwoSampleData(u, v, ("x1", "x2", "xs"))


@pytest.fixture
def ci_null_data():
    return gen_gaussian(3000, 3000, ClassPriors(0.8, 0.2), 0.0, False, seed=7)
