from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from pclattice import make_params

settings.register_profile(
    "default", max_examples=50, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

MU = 16.0
P = 0.1


@pytest.fixture
def symmetric():
    return make_params(0.5, MU, P, 0.5)


@pytest.fixture
def bu_reference():
    """Point with 0 < c_du < c_ud used throughout the threshold tests."""
    return make_params(0.35, MU, P, 0.2)


@st.composite
def param_sets(draw, mu_min=5.0, mu_max=40.0):
    """Random bistable parameter sets, kept away from the fold edges."""
    mu = draw(st.floats(mu_min, mu_max))
    p_cap = 4.0 / (4.0 + mu)
    p = draw(st.floats(0.0, 0.95 * p_cap))
    q = draw(st.floats(0.0, 1.0 - p))
    lo, hi = make_params(0.5, mu, 0.0, 0.0).theta_star, 1 - make_params(0.5, mu, 0.0, 0.0).theta_star
    frac = draw(st.floats(0.02, 0.98))
    theta = lo + frac * (hi - lo)
    return make_params(theta, mu, p, q)


def random_params(rng: np.random.Generator, n: int):
    out = []
    while len(out) < n:
        mu = rng.uniform(5.0, 40.0)
        p = rng.uniform(0.0, 0.95 * 4.0 / (4.0 + mu))
        q = rng.uniform(0.0, 1.0 - p)
        base = make_params(0.5, mu, 0.0, 0.0)
        theta = rng.uniform(base.theta_star, base.theta_sup_star)
        try:
            out.append(make_params(theta, mu, p, q))
        except ValueError:
            continue
    return out


# acceptance bookkeeping: one PASS/FAIL line per criterion in the terminal summary
_CRITERIA: dict[int, tuple[str, bool, float]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (rep.when != "call" and not rep.failed):
        return
    number, title = marker.args
    _, ok, seconds = _CRITERIA.get(number, (title, True, 0.0))
    _CRITERIA[number] = (title, ok and rep.passed, seconds + rep.duration)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_CRITERIA):
        title, ok, seconds = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {title}  ({seconds:.1f} s)")
