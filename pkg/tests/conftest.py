import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hcarma.operators import assemble_companion
from hcarma.spaces import SpaceSpec

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES: list = []


def random_system(p, n, rng, scale=1.0, weighted=False, invertible_I=False):
    """Random bounded companion system with n coordinates per component."""
    spaces = []
    for k in range(p):
        w = rng.uniform(0.5, 2.0, n) if weighted else None
        spaces.append(SpaceSpec(f"H{k + 1}", n, w))
    A = [scale * rng.standard_normal((n, n)) / np.sqrt(n) for _ in range(p)]
    if invertible_I:
        I = [np.eye(n) + 0.3 * rng.standard_normal((n, n)) / np.sqrt(n) for _ in range(p - 1)]
    else:
        I = [np.eye(n)] * (p - 1)
    return assemble_companion(spaces, A, I)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
