"""Shared fixtures for the Schwarz Lab test suite."""

import numpy as np
import pytest

from schwarz_lab.core.fem import GridSpec, assemble_poisson
from schwarz_lab.core.oracle import assemble_P_dense
from schwarz_lab.core.splitting import build_splitting


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run the full-size reproductions")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-size reproduction, needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope="session")
def small_splitting():
    """n0=2, n1=8, one overlap layer: N=49, n=4, M0=1."""
    return build_splitting(GridSpec(n1=8, n0=2), 1)


@pytest.fixture(scope="session")
def small_dense(small_splitting):
    return assemble_P_dense(small_splitting)


@pytest.fixture(scope="session")
def single_splitting():
    """One subdomain covering the whole domain, no coarse space."""
    return build_splitting(GridSpec(n1=6, n0=1), 1)


@pytest.fixture
def zero_rhs_splitting():
    grid = GridSpec(n1=8, n0=2)
    return build_splitting(grid, 1, 1.0, assemble_poisson(grid, f=0.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
