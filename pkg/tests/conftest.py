"""Shared fixtures: reference specs and the expensive verification reports.

The finite-difference reports are computed once per session and reused by
both the module tests and the acceptance suite.
"""

import time

import numpy as np
import pytest

from polytori.qdiff import random_spec
from polytori.variational import verify_rauch, verify_tau_and_Q, verify_value_gradients

_CRITERIA_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_CRITERIA_KEY] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_CRITERIA_KEY, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(lines):
        terminalreporter.write_line(line)


@pytest.fixture
def record_criterion(request):
    """Record and print one pass/fail line for an acceptance criterion."""

    def record(number, passed, detail):
        line = f"CRITERION {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(line)
        request.config.stash[_CRITERIA_KEY].append((number, line))
        return passed

    return record


class Timed:
    def __init__(self, func, *args, **kwargs):
        t0 = time.perf_counter()
        self.value = func(*args, **kwargs)
        self.seconds = time.perf_counter() - t0


@pytest.fixture(scope="session")
def spec_l2():
    return random_spec(2, sigma=1j, rng=np.random.default_rng(1))


@pytest.fixture(scope="session")
def spec_l2b():
    return random_spec(2, sigma=1j, rng=np.random.default_rng(5))


@pytest.fixture(scope="session")
def spec_l3():
    return random_spec(3, sigma=1j, rng=np.random.default_rng(12))


@pytest.fixture(scope="session")
def rauch_l2(spec_l2):
    return Timed(verify_rauch, spec_l2)


@pytest.fixture(scope="session")
def rauch_l3(spec_l3):
    return Timed(verify_rauch, spec_l3)


@pytest.fixture(scope="session")
def values_l2(spec_l2):
    return Timed(verify_value_gradients, spec_l2)


@pytest.fixture(scope="session")
def values_l3(spec_l3):
    return Timed(verify_value_gradients, spec_l3)


@pytest.fixture(scope="session")
def tau_l2(spec_l2):
    return Timed(verify_tau_and_Q, spec_l2)


@pytest.fixture(scope="session")
def tau_l3(spec_l3):
    return Timed(verify_tau_and_Q, spec_l3)
