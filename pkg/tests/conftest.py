import math

import numpy as np
import pytest

from hestonfisher.frft import FrftConfig
from hestonfisher.heston import SPX_PARAMS, MarketState, QuadratureConfig

SPX_SPOT = 1845.73
SPX_V = 0.0108
SPX_TAU = 30.0 / 365.0


@pytest.fixture(scope="session")
def spx_params():
    return SPX_PARAMS


@pytest.fixture(scope="session")
def spx_state():
    return MarketState(SPX_SPOT, 0.00167, 0.01894)


@pytest.fixture(scope="session")
def tight_quad():
    return QuadratureConfig(tol=1e-13)


@pytest.fixture(scope="session")
def default_frft():
    return FrftConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def norm_cdf(x):
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def black_scholes_call(spot, strike, tau, vol, rate=0.0, dividend=0.0):
    fwd = spot * math.exp((rate - dividend) * tau)
    sd = vol * math.sqrt(tau)
    d1 = (math.log(fwd / strike) + 0.5 * sd * sd) / sd
    d2 = d1 - sd
    return math.exp(-rate * tau) * (fwd * norm_cdf(d1) - strike * norm_cdf(d2))


# acceptance results: criterion number -> list of (part, passed, detail)
ACCEPTANCE = {}
ACCEPTANCE_TITLES = {}


def record_acceptance(number, title, part, passed, detail):
    ACCEPTANCE_TITLES[number] = title
    ACCEPTANCE.setdefault(number, []).append((part, bool(passed), detail))
    print(f"[{'PASS' if passed else 'FAIL'}] {number} {title} / {part}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[number]
        status = "PASS" if all(ok for _, ok, _ in parts) else "FAIL"
        detail = "; ".join(f"{part}: {'ok' if ok else 'FAILED'} ({d})" for part, ok, d in parts)
        terminalreporter.write_line(f"{status} {number:>2} {ACCEPTANCE_TITLES[number]} -- {detail}")
