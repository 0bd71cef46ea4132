import os

import pytest
from hypothesis import HealthCheck, settings

from brakesafe.scenario import ScenarioParams, derive_geometry
from brakesafe.severity import ImpactSeverityBounds, severity_patterns, severity_tau_table

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=500,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# Running example parameters
TAB2 = ScenarioParams(v_init=15.0, v_max=15.0, a_b_min=1.0, a_b_max=8.0, a_max=1.0,
                      delta_s_stand=5.0, delta_t=0.1)
BOUNDS = ImpactSeverityBounds(5.3, 7.8, 10.3, 15.0)


@pytest.fixture(scope="session")
def params():
    return TAB2


@pytest.fixture(scope="session")
def geom():
    return derive_geometry(TAB2)


@pytest.fixture(scope="session")
def tau_table():
    """Computed once per session (takes ~15 s)."""
    return severity_tau_table(TAB2, BOUNDS)


@pytest.fixture(scope="session")
def pattern_table(tau_table, geom):
    return severity_patterns(tau_table, geom.n_max)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
