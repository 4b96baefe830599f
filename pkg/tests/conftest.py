import math

import numpy as np
import pytest

from nabif.galerkin import ModelConfig
from nabif.hull import Forcing


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def model():
    return ModelConfig()


@pytest.fixture
def const_model():
    return ModelConfig(forcing=Forcing(symbol="constant", coeffs=(2.0,), sign=-1))


def pitchfork_amplitude(eps, c=2.0):
    """Equilibrium of a' = eps a - (3c/(2 pi)) a^3."""
    return math.sqrt(abs(eps) * 2 * math.pi / (3 * c))


def periodic_amplitude(eps, phase, sign=-1):
    """Single-mode branch for h = 2 + sin: v = a^-2 solves a linear ODE in closed form.

    sign=-1, eps=lam-1>0: bounded solution of v' = -2 eps v + (3/pi) h.
    sign=+1, eps=1-lam>0: bounded solution of v' = 2 eps v - (3/pi) h.
    """
    s = math.sin(phase)
    c = math.cos(phase)
    if sign < 0:
        v = 3 / math.pi * (1 / eps + (2 * eps * s - c) / (4 * eps ** 2 + 1))
    else:
        v = 3 / math.pi * (1 / eps + (2 * eps * s + c) / (4 * eps ** 2 + 1))
    return v ** -0.5


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line per acceptance criterion; printed in the terminal summary."""
    store = request.config.__dict__.setdefault("_acceptance", {})

    def record(n, passed, detail):
        store[n] = f"criterion {n}: {'PASS' if passed else 'FAIL'} | {detail}"
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.__dict__.get("_acceptance")
    if store:
        terminalreporter.section("acceptance criteria")
        for n in sorted(store):
            terminalreporter.write_line(store[n])
