import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from sigshape.fem import DEFAULT_PARAMS, exp_load
from sigshape.mesh import generate_disk_mesh

settings.register_profile(
    "sigshape", deadline=None, max_examples=30, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("sigshape")


@pytest.fixture(scope="session")
def params():
    return DEFAULT_PARAMS


@pytest.fixture(scope="session")
def load():
    return exp_load()


@pytest.fixture(scope="session")
def disk0():
    return generate_disk_mesh(96, 0)


@pytest.fixture(scope="session")
def disk1():
    return generate_disk_mesh(96, 1)


@pytest.fixture(scope="session")
def disk2():
    return generate_disk_mesh(96, 2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def criterion(request):
    """``criterion(number, title, passed, detail)`` records one acceptance line and asserts it."""

    def record(number, title, passed, detail):
        line = f"criterion {number} {'PASS' if passed else 'FAIL'}: {title} ({detail})"
        print(line)
        request.config.stash[_ACCEPTANCE].append(line)
        assert passed, line

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
