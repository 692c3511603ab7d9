import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_VERDICTS: dict[str, str] = {}


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    key = str(marker.args[0])
    if call.when == "call" or (call.when == "setup" and call.excinfo is not None):
        if call.excinfo is None:
            verdict = "PASS"
        elif call.excinfo.errisinstance(pytest.skip.Exception):
            verdict = "SKIP"
        else:
            verdict = "FAIL"
        # a criterion split over several tests passes only if all of them do
        rank = {"SKIP": 0, "PASS": 1, "FAIL": 2}
        if rank[verdict] >= rank.get(_VERDICTS.get(key), -1):
            _VERDICTS[key] = verdict


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_VERDICTS, key=int):
        terminalreporter.write_line(f"criterion {key}: {_VERDICTS[key]}")
