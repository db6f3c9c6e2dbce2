import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from wbary.measures import DiscreteMeasure, Problem
from wbary.ot import warm_up

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

ACCEPTANCE_LINES = []


def random_measure(rng, n, d, integer=False):
    if integer:
        pts = rng.integers(-2, 3, size=(n, d)).astype(float)
    else:
        pts = rng.normal(size=(n, d))
    masses = rng.random(n) + 0.05
    return DiscreteMeasure.from_masses(pts, masses)


def random_problem(rng, N, n_max, d, p, integer=False):
    measures = [random_measure(rng, int(rng.integers(1, n_max + 1)), d, integer) for _ in range(N)]
    lam = rng.random(N) + 0.1
    return Problem(measures, lam / lam.sum(), p)


@pytest.fixture(scope="session", autouse=True)
def warm_jit():
    # first call loads (or compiles) the numba kernels; keep it out of timed checks
    warm_up()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
