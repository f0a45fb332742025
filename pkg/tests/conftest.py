import sys
from fractions import Fraction as F

import pytest

from omegastar.geometry import Point
from omegastar.systems import DiscreteSystem


def line_points(n):
    """Points j/n on coordinate 0, j = 0..n."""
    return tuple(Point.of({0: F(j, n)}) for j in range(n + 1))


def functional(images, mesh=0):
    """Purely discrete system on the points j/(n+1), one per state."""
    n = len(images)
    pts = tuple(Point.of({0: F(j + 1, n + 1)}) for j in range(n))
    return DiscreteSystem(pts, tuple(images), F(mesh))


def cycle(n):
    return functional([(j + 1) % n for j in range(n)])


@pytest.fixture
def three_cycle():
    return cycle(3)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(results, key=str):
        terminalreporter.write_line(results[key])
