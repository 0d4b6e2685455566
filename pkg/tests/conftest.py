import numpy as np
import pytest
from hypothesis import settings

from coptact.geometry import axis_angle
from coptact.kinematics import reference_finger
from coptact.sensor_model import TaxelLayout
from coptact.synthetic import CapLayoutSpec, generate_cap_layout

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def cap_layout():
    return generate_cap_layout(CapLayoutSpec())


@pytest.fixture(scope="session")
def finger():
    return reference_finger()


def flat_patch(n_side=3, pitch=0.0047, sigma=0.003, lam=1e-3, tilt=None, **kw):
    """A planar grid of taxels in z = 0 whose inward normals all point along -z."""
    xs = (np.arange(n_side) - (n_side - 1) / 2) * pitch
    pos = np.array([[x, y, 0.0] for x in xs for y in xs])
    base = np.diag([1.0, -1.0, -1.0])  # maps the taxel z axis to -z
    rot = np.repeat(base[None], len(pos), axis=0)
    if tilt is not None:
        rot = rot @ tilt
    return TaxelLayout(pos, rot, sigma=sigma, lam=lam, **kw)


def random_unit(rng, n=None):
    v = rng.standard_normal((3,) if n is None else (n, 3))
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def rotation_about(axis, angle):
    return axis_angle(np.asarray(axis, dtype=float), angle)


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance-criterion lines, which pytest captures on passing tests."""
    import sys

    module = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for number in sorted(results):
            terminalreporter.write_line(results[number])
