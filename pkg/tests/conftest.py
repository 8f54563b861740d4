import numpy as np
import pytest

from taxiaq import kernels
from taxiaq.network import build_segments

_criteria = {}


@pytest.fixture(params=kernels.AVAILABLE)
def kernel(request):
    return request.param


@pytest.fixture
def random_segments():
    """About 500 short random polylines in a 2 km square."""

    def make(seed=0, n_roads=120):
        rng = np.random.default_rng(seed)
        polys = []
        for _ in range(n_roads):
            start = rng.uniform(0, 2000, 2)
            steps = rng.normal(0, 60, (int(rng.integers(1, 4)), 2))
            polys.append(("residential", np.vstack([start, start + np.cumsum(steps, axis=0)])))
        return build_segments(polys, 50.0)

    return make


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None or call.when != "call":
        return
    n = marker.args[0]
    ok = call.excinfo is None
    prev = _criteria.get(n, (True, []))
    _criteria[n] = (prev[0] and ok, prev[1] + [item.name])


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        ok, names = _criteria[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  ({', '.join(names)})")
