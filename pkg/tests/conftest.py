import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow], derandomize=True
)
settings.load_profile("default")

from glchains.energy import minimize  # noqa: E402
from glchains.fields import make_boundary_datum  # noqa: E402


def disk_minimizer(degree, eps, n):
    w = make_boundary_datum({"kind": "disk", "degree": degree, "radius": 1.0, "n": n, "target": "circle"})
    u, rep, trace = minimize(w, eps)
    return w, u, rep, trace


@pytest.fixture(scope="session")
def deg1_64():
    """Degree-1 disk minimiser, 64^2, eps = 0.1."""
    return disk_minimizer(1, 0.1, 64)


@pytest.fixture(scope="session")
def deg1_128():
    """Degree-1 disk minimiser, 128^2, eps = 0.05."""
    return disk_minimizer(1, 0.05, 128)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the run
_CRITERIA = {}


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    k = props["criterion"]
    if report.when == "call" or (report.when == "setup" and report.failed):
        ok, details = _CRITERIA.get(k, (True, []))
        _CRITERIA[k] = (ok and report.passed, details + [props["detail"]] if "detail" in props else details)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_CRITERIA):
        ok, details = _CRITERIA[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {'; '.join(details)}")
