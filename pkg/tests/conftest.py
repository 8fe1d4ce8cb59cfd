import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from purcellsim import TWO_PI, bundled_device

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def device():
    return bundled_device()


@pytest.fixture(scope="session")
def weak_device():
    """Filter weakly hybridised with the resonator, linear filter."""
    d = bundled_device()
    return d.replace(g_cf=TWO_PI * 15e6, kappa_f=TWO_PI * 100e6, chi_qc=-TWO_PI * 10e6,
                     filter_freq=d.resonator_freq, filter_anharm=0.0)


def mhz(x):
    return TWO_PI * 1e6 * x


def ghz(x):
    return TWO_PI * 1e9 * x


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
