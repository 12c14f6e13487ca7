import numpy as np
import pytest

from helpers import cabinet

# criterion number -> (passed, detail), filled by the acceptance tests
CRITERIA: dict = {}


@pytest.fixture
def record_criterion():
    def record(number: int, passed: bool, detail: str = ""):
        CRITERIA[number] = (bool(passed), detail)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        ok, detail = CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def scene():
    return cabinet()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
