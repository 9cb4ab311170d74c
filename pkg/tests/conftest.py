import numpy as np
import pytest
from hypothesis import settings

from tablegrasp import PointCloud

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def cloud_of(points, **kw) -> PointCloud:
    return PointCloud(np.asarray(points, dtype=np.float64).reshape(-1, 3), **kw)


def blob(rng, center, n, spread=0.004):
    return np.asarray(center) + rng.uniform(-spread, spread, (n, 3))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
