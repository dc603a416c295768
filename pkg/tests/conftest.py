import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def trig_field(rng, points, dim=2, kmax=3, terms=6, mean=0.0, amplitude=1.0):
    """Random real trigonometric polynomial with frequencies <= kmax."""
    x = np.meshgrid(*[np.arange(points) / points] * dim, indexing="ij")
    f = np.zeros((points,) * dim)
    for _ in range(terms):
        k = rng.integers(-kmax, kmax + 1, size=dim)
        f += rng.normal() * np.cos(2 * np.pi * sum(ki * xi for ki, xi in zip(k, x)) + rng.uniform(0, 2 * np.pi))
    scale = np.abs(f).max()
    return mean + amplitude * (f / scale if scale else f)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
