import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from qsymp.config import load_config
from qsymp import fixture_path
from qsymp.torus import QuasiPeriodicScalar

settings.register_profile(
    "default", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

GOLDEN = (1 + math.sqrt(5)) / 2


@pytest.fixture
def flagship_A():
    return np.array([[1.0, 0.0], [0.0, 1.0], [GOLDEN, math.sqrt(2) - 1]])


@pytest.fixture
def periodic_field():
    return QuasiPeriodicScalar.from_terms(2, [((1, 0), 0.05, 0.0), ((0, 1), 0.05, 0.0)])


@pytest.fixture(scope="session")
def flagship_cfg():
    return load_config(fixture_path("flagship_density.json"))


@pytest.fixture(scope="session")
def map_cfg():
    return load_config(fixture_path("flagship_map.json"))


@pytest.fixture(scope="session")
def flow_cfg():
    return load_config(fixture_path("flagship_flow.json"))
