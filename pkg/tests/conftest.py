import math

import numpy as np
import pytest

from publicgood.model import AgentSpec, Scenario, StepsizeSchedule, UtilitySpec, validate_scenario

LN2 = math.log(2.0)

# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES: dict[str, str] = {}


def random_scenario(rng: np.random.Generator, m=None, r: float = 1.0):
    """Log-log agents with parameters drawn as in the acceptance suite."""
    if m is None:
        m = int(rng.integers(2, 7))
    agents = []
    for _ in range(m):
        a, b, w, alpha = rng.uniform(0.5, 2.0, size=4)
        c = w + rng.uniform(1.0, 3.0)
        agents.append(AgentSpec(float(alpha), float(w), UtilitySpec.log_log(a, b, c)))
    L = float(rng.uniform(1.0, 3.0))
    return validate_scenario(Scenario(agents, L, StepsizeSchedule(r)))


def single_agent(L=2.0, w=2.0, r=1.0):
    return validate_scenario(Scenario(
        [AgentSpec(1.0, w, UtilitySpec.log_log(1, 1, 3))], L, StepsizeSchedule(r)))


@pytest.fixture
def analytic():
    """m=1, U = ln(1+x) + ln(3-t), w=2, L=2: optimum x = t = 1, value 2 ln 2."""
    return single_agent()


@pytest.fixture
def twins():
    agents = [AgentSpec(1.0, 1.0, UtilitySpec.log_log(1, 1, 3))] * 2
    return validate_scenario(Scenario(agents, 1.0, StepsizeSchedule(1.0)))


@pytest.fixture
def mixed3():
    """Three heterogeneous agents with an interior optimum (x* < L)."""
    agents = [AgentSpec(1.0, 2.0, UtilitySpec.log_log(0.3, 1, 4)),
              AgentSpec(1.5, 1.0, UtilitySpec.log_log(0.2, 2, 3)),
              AgentSpec(1.0, 1.5, UtilitySpec.quad_log(0.4, 0.01, 1, 3))]
    return validate_scenario(Scenario(agents, 5.0, StepsizeSchedule(1.0)))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES, key=lambda k: (int(k.rstrip("ab")), k)):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
