import math

import numpy as np
import pytest
from hypothesis import strategies as st

from tieekf.lie import Pose, exp_so3

finite = st.floats(-10.0, 10.0, allow_nan=False, allow_infinity=False)
vec3 = st.tuples(finite, finite, finite).map(np.array)


@st.composite
def rotation_vectors(draw, max_angle=math.pi - 1e-3):
    axis = draw(st.tuples(*[st.floats(-1, 1)] * 3).filter(lambda a: np.linalg.norm(a) > 1e-3))
    angle = draw(st.floats(0.0, max_angle))
    a = np.array(axis)
    return angle * a / np.linalg.norm(a)


@st.composite
def twists(draw, max_angle=math.pi - 1e-3, max_trans=5.0):
    rho = draw(st.tuples(*[st.floats(-max_trans, max_trans)] * 3))
    return np.concatenate([rho, draw(rotation_vectors(max_angle))])


@st.composite
def poses(draw):
    phi = draw(rotation_vectors())
    r = draw(st.tuples(*[st.floats(-5, 5)] * 3))
    return Pose(exp_so3(phi), r)


def random_twist(rng, max_angle=math.pi - 1e-3, max_trans=3.0):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return np.concatenate([rng.uniform(-max_trans, max_trans, 3), rng.uniform(0, max_angle) * axis])


def random_pose(rng):
    return Pose(exp_so3(random_twist(rng)[3:]), rng.uniform(-3, 3, 3))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def verdict(record_property):
    """Record the one-line outcome of an acceptance criterion."""
    def _record(number, ok, detail):
        record_property("acceptance", (number, "PASS" if ok else "FAIL", detail))
        return ok
    return _record


def pytest_terminal_summary(terminalreporter):
    lines = []
    for key in ("passed", "failed"):
        for rep in terminalreporter.stats.get(key, []):
            for name, value in getattr(rep, "user_properties", []):
                if name == "acceptance":
                    lines.append(value)
    if lines:
        terminalreporter.section("acceptance criteria")
        for number, status, detail in sorted(lines):
            terminalreporter.write_line(f"criterion {number}: {status}  {detail}")
