import os
import sys

import numpy as np
import pytest

_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, _ROOT)

from src.lti_core import Plant, discretize  # noqa: E402

RUN_SLOW = os.getenv("HANDSOFF_RUN_SLOW", "0") == "1"


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: table reproductions and long sweeps (set HANDSOFF_RUN_SLOW=1)")


def pytest_collection_modifyitems(config, items):
    if RUN_SLOW:
        return
    skip = pytest.mark.skip(reason="slow; set HANDSOFF_RUN_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def integrator():
    """Scalar integrator dx/dt = u from x(0) = 1 over T = 2."""
    return Plant(A=[[0.0]], B=[[1.0]], xi=[1.0], T=2.0)


@pytest.fixture
def double_integrator():
    return Plant(A=[[0.0, 1.0], [0.0, 0.0]], B=[0.0, 1.0], xi=[1.0, 0.0], T=5.0)


@pytest.fixture
def integrator_problem(integrator):
    return discretize(integrator, 200)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
