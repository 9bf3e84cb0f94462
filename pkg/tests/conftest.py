import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from src.mesher import build_initial_surface, build_scherk_quotient
from src.scherk import DeformParams

M_SMALL = 3
RES_SMALL = 4


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: builds surfaces for several m or runs the full fixed point")


@pytest.fixture(scope="session")
def params():
    return DeformParams.build(theta=0.0, m=M_SMALL)


@pytest.fixture(scope="session")
def surface(params):
    return build_initial_surface(0.0, M_SMALL, RES_SMALL, params=params, check_intersections=False)


@pytest.fixture(scope="session")
def surface_theta(params):
    theta_params = params.with_theta(0.02)
    return build_initial_surface(0.02, M_SMALL, RES_SMALL, params=theta_params, check_intersections=False)


@pytest.fixture(scope="session")
def quotient(surface):
    return build_scherk_quotient(surface)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def _no_env_overrides(monkeypatch):
    for name in list(os.environ):
        if name.startswith("FBMS_"):
            monkeypatch.delenv(name)
