import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lpsharpen.io import load_fixture

settings.register_profile("lp", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("lp")

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def record_criterion():
    """Store one pass/fail line per acceptance criterion for the terminal summary."""

    def _record(number: int, ok: bool, detail: str):
        ACCEPTANCE[number] = (bool(ok), detail)
        print(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def rutherford():
    return load_fixture("rutherford.csv")


@pytest.fixture
def spiegel():
    return load_fixture("spiegel.csv")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
