import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from kelly_riskcal import _kernels, sort_market
from kelly_riskcal.samples import seven_market

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("stress", parent=settings.get_profile("default"), max_examples=1000)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session", autouse=True)
def _jit():
    _kernels.warmup()


@pytest.fixture
def seven():
    return seven_market()


@pytest.fixture
def seven_sorted(seven):
    return sort_market(seven)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.LINES, key=lambda s: int(s.split()[1])):
        terminalreporter.write_line(line)
