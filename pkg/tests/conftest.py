import numpy as np
import pytest

from qdrop2d.grid import make_grid
from qdrop2d.potential import ModelParams, exact_droplet, exact_params
from qdrop2d.stationary import newton_cg_solve

HOG = dict(sigma=1.0, v0=-1.0 / 16.0, v1=1.0, w0=1.0, mu=2.0, omega=0.0)


@pytest.fixture(scope="session")
def g128():
    return make_grid(128, 128, 8.0, 8.0)


@pytest.fixture(scope="session")
def g64():
    return make_grid(64, 64, 8.0, 8.0)


@pytest.fixture(scope="session")
def g32():
    return make_grid(32, 32, 8.0, 8.0)


@pytest.fixture(scope="session")
def hog():
    return ModelParams(**HOG)


@pytest.fixture(scope="session")
def exact_state32(g32):
    # the closed form carries 8e-4 discretisation residual at 32^2; polish it
    p = exact_params(1.0, 1.0)
    return newton_cg_solve(g32, exact_droplet(g32, 1.0), p)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = []


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def verdict(request):
    """Record and print one PASS/FAIL line for an acceptance criterion, then assert it."""
    def check(number: int, ok: bool, detail: str):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}"
        request.config.stash[ACCEPTANCE_KEY].append(line)
        print(line)
        assert ok, line
    return check
