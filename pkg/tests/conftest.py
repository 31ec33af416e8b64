import os
import sys

import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running acceptance-scale checks")


@pytest.fixture(scope="session")
def ride_hailing():
    from curbflow import bundled
    return bundled("ride_hailing")


@pytest.fixture(scope="session")
def segment():
    from curbflow import bundled
    return bundled("segment_600")


def pytest_terminal_summary(terminalreporter):
    from _report import RESULTS
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        ok, detail = RESULTS[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
