import numpy as np
import pytest
from hypothesis import settings

from randecoc import kernels

settings.register_profile("repo", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("repo")

BACKENDS = ["python"] + (["native"] if kernels.BACKEND == "native" else [])


@pytest.fixture(params=BACKENDS)
def impl(request):
    return kernels.backend(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_acceptance = []


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        detail = dict(report.user_properties).get("detail", "")
        _acceptance.append((report.nodeid.split("::")[-1], report.outcome, report.duration, detail))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome, duration, detail in _acceptance:
        verdict = "PASS" if outcome == "passed" else "FAIL"
        extra = f"  [{detail}]" if detail else ""
        terminalreporter.write_line(f"{verdict}  {name}  ({duration:.2f}s){extra}")
