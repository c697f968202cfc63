import re

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from principal_objects.dataset import load_iris

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_CRITERION = re.compile(r"test_criterion_(\d+)_")
_results = {}


@pytest.fixture(scope="session")
def iris():
    return load_iris()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if not m:
        return
    n = int(m.group(1))
    failed = report.failed or (report.when == "call" and report.skipped)
    prev = _results.get(n, (True, report.nodeid.split("::")[-1]))
    if report.when == "call" or report.failed:
        _results[n] = (prev[0] and not failed, prev[1])


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        ok, name = _results[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {name}")
