import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fmri2vid.synthdata import DataConfig, generate_dataset

settings.register_profile("pkg", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("pkg")


@pytest.fixture(scope="session")
def small_dataset():
    """A reduced subject used by unit tests that need real splits."""
    return generate_dataset(DataConfig(n_train=64, n_test=24, seed=3))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
