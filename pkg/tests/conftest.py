import sys

import numpy as np
import pytest

from clockensemble.model import ClockSpec, EnsembleConfig, homogeneous_ensemble

EX1_SIGMA = (2.0587e-20, 4.0760e-28)
EX2_SIGMA = (9e-26, 7.5e-34, 1e-47)
EX1_BETA_UNEQUAL = (0.250, 0.375, 0.125, 0.125, 0.125)


def example1(weights=None, horizon=36000, **kw):
    m = 5
    x0 = np.linspace(1.05e-15, 1.95e-15, 2 * m)
    kw.setdefault("x0", x0)
    kw.setdefault("x0_guess", np.full(2 * m, 1e-15))
    return homogeneous_ensemble(m, EX1_SIGMA, horizon, tau=0.1, r=1e-12, weights=weights, **kw)


def example2(r, horizon=2000, **kw):
    kw.setdefault("x0", np.full(9, 1e-28))
    kw.setdefault("p0", 1e-13)
    return homogeneous_ensemble(3, EX2_SIGMA, horizon, tau=1.0, r=r, **kw)


def random_weights(rng, m):
    beta = rng.uniform(0.2, 1.0, m)
    beta /= beta.sum()
    beta[-1] = 1.0 - beta[:-1].sum()
    return beta


def scaled_config(rng, n, m, horizon, weights=None, **kw):
    """Well-scaled random ensemble: sigma and r of order one.

    tau stays in [0.2, 0.5] so the filter's closed loop is stable up to n = 3.
    """
    sigma = tuple(rng.uniform(0.5, 2.0, n))
    kw.setdefault("r", rng.uniform(0.5, 2.0))
    kw.setdefault("p0", 1.0)
    kw.setdefault("x0", rng.normal(size=n * m))
    kw.setdefault("x0_guess", np.zeros(n * m))
    return homogeneous_ensemble(m, sigma, horizon, tau=rng.uniform(0.2, 0.5), weights=weights, **kw)


def rel_max(a, b):
    scale = max(np.abs(a).max(), np.abs(b).max())
    return np.abs(np.asarray(a) - np.asarray(b)).max() / scale


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        terminalreporter.write_line(results[number])
