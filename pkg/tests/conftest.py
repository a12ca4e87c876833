import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mpcs.base_space import Box
from mpcs.config import load_config
from mpcs.fixtures import Frame
from mpcs.levy_model import ExponentialMarks, LevyModel, UniformSpatial

settings.register_profile("mpcs", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("mpcs")

# criterion lines collected by the acceptance tests, printed in the summary
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture(scope="session")
def cfg():
    return load_config(None)


@pytest.fixture(scope="session")
def model(cfg):
    """The default (tilted exponential) model."""
    return cfg.build_model()


@pytest.fixture(scope="session")
def plain_model():
    """Uniform rho = 1 on R with exponential(1) marks."""
    return LevyModel(UniformSpatial(1.0, 1), ExponentialMarks(1.0))


@pytest.fixture(scope="session")
def window():
    return Box([0.0], [1.0])


@pytest.fixture(scope="session")
def frame():
    return Frame(0.0, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
