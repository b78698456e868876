import numpy as np
import pytest
from hypothesis import strategies as st

from wdistill.protocols import WCoefficients


def random_coefficients(rng, n):
    """Uniform points on the positive octant of the unit sphere, sorted a >= b >= c."""
    out = []
    for _ in range(n):
        v = np.abs(rng.normal(size=3))
        v = np.sort(v / np.linalg.norm(v))[::-1]
        out.append(WCoefficients(*v))
    return out


@pytest.fixture(scope="session")
def coeff_sample():
    return random_coefficients(np.random.default_rng(20240417), 1000)


@pytest.fixture
def k532():
    """a^2 = 0.5, b^2 = 0.3, c^2 = 0.2, the worked example used throughout."""
    return WCoefficients.from_squares(0.5, 0.3, 0.2)


@st.composite
def coefficients(draw, min_c=0.0):
    x = draw(st.floats(0.01, 1.0))
    y = draw(st.floats(0.01, 1.0))
    z = draw(st.floats(min_c, 1.0))
    v = np.sort(np.array([x, y, z]) / np.linalg.norm([x, y, z]))[::-1]
    return WCoefficients(*v)


@st.composite
def states(draw, dims=(2, 2, 2)):
    n = int(np.prod(dims))
    re = draw(st.lists(st.floats(-1, 1), min_size=n, max_size=n))
    im = draw(st.lists(st.floats(-1, 1), min_size=n, max_size=n))
    v = np.array(re) + 1j * np.array(im)
    if np.linalg.norm(v) < 1e-3:
        v[0] += 1.0
    return v / np.linalg.norm(v)
