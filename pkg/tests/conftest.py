import numpy as np
import pytest

from descry.geometry import look_at_camera


def random_camera(rng, k1=0.0, k2=0.0):
    """A valid camera a few meters above ground, looking into the scene."""
    position = np.array([rng.uniform(-3, 3), rng.uniform(-3, 0), rng.uniform(2.0, 8.0)])
    target = np.array([rng.uniform(-4, 4), rng.uniform(4, 18), 0.0])
    focal = rng.uniform(600, 1800)
    return look_at_camera(position, target, focal=focal, k1=k1, k2=k2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_PREFIX = "tests/test_acceptance.py"


def pytest_runtest_logreport(report):
    # one visible pass/fail line per acceptance criterion
    if report.when != "call" or ACCEPTANCE_PREFIX not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1].replace("test_", "", 1)
    status = "PASS" if report.passed else "FAIL"
    print(f"\n[acceptance] {name}: {status}", flush=True)
