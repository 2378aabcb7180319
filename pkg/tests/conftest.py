import math

import numpy as np
import pytest

from morse_ruelle.critical import find_critical_points
from morse_ruelle.manifold import builtin

SQRT2 = math.sqrt(2.0)
SQRT3 = math.sqrt(3.0)


def torus_backward_exact(X, t, c=(1.0, SQRT2)):
    """Closed-form backward flow of ``c1 cos th1 + c2 cos th2``: ``tan(th/2)`` scales by ``exp(c t)``."""
    out = np.empty_like(X)
    for j in range(2):
        out[:, j] = np.mod(2.0 * np.arctan2(np.exp(c[j] * t) * np.sin(X[:, j] / 2), np.cos(X[:, j] / 2)), 2 * np.pi)
    return out


@pytest.fixture(scope="session")
def torus():
    return builtin("torus", {"c1": 1.0, "c2": SQRT2})


@pytest.fixture(scope="session")
def torus_records(torus):
    return find_critical_points(torus)


@pytest.fixture(scope="session")
def qsphere():
    return builtin("sphere", {"a": 0.0, "b": 1.0, "c": SQRT3})


@pytest.fixture(scope="session")
def qsphere_records(qsphere):
    return find_critical_points(qsphere)


@pytest.fixture(scope="session")
def hsphere():
    return builtin("sphere")


@pytest.fixture(scope="session")
def hsphere_records(hsphere):
    return find_critical_points(hsphere)
