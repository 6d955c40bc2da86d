import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from publicgood.model import (AgentSpec, BadParameter, DomainError, NonConcaveUtility,
                              NotDecreasingInT, NotIncreasingInX, Scenario, StepsizeSchedule,
                              UtilitySpec, ValidationError, mu_index, mu_pairs, n_pairs,
                              stepsize, upsilon_bound, utility_eval, utility_grad,
                              validate_scenario)

LOG = UtilitySpec.log_log(1, 1, 3)


def scenario(agents, L=2.0, r=1.0):
    return Scenario(agents, L, StepsizeSchedule(r))


class TestValidate:
    def test_single_agent_valid(self):
        vs = validate_scenario(scenario([AgentSpec(1, 2, LOG)]))
        assert vs.t_max == (0.0,)
        assert vs.m == 1

    def test_quad_log_not_increasing(self):
        u = UtilitySpec.quad_log(a=1, p=1, b=1, c=3)
        with pytest.raises(NotIncreasingInX) as exc:
            validate_scenario(scenario([AgentSpec(1, 2, u)], L=2))
        assert exc.value.agent == 1

    def test_t_max(self):
        vs = validate_scenario(scenario([AgentSpec(1, 1, LOG), AgentSpec(1, 2, LOG)]))
        assert vs.t_max == (2.0, 1.0)

    @pytest.mark.parametrize("agent", [
        AgentSpec(0, 1, LOG),
        AgentSpec(-1, 1, LOG),
        AgentSpec(1, 0, LOG),
        AgentSpec(1, 3, LOG),           # c <= w
        AgentSpec(1, 1, UtilitySpec.log_log(0, 1, 3)),
        AgentSpec(1, 1, UtilitySpec.quad_log(1, 0, 1, 3)),
    ])
    def test_bad_parameter(self, agent):
        with pytest.raises(BadParameter):
            validate_scenario(scenario([AgentSpec(1, 1, LOG), agent]))

    def test_bad_parameter_names_agent(self):
        with pytest.raises(BadParameter) as exc:
            validate_scenario(scenario([AgentSpec(1, 1, LOG), AgentSpec(1, 5, LOG)]))
        assert exc.value.agent == 2

    def test_empty_and_bad_cap(self):
        with pytest.raises(ValidationError):
            validate_scenario(scenario([]))
        with pytest.raises(BadParameter):
            validate_scenario(scenario([AgentSpec(1, 1, LOG)], L=0))
        with pytest.raises(BadParameter):
            validate_scenario(scenario([AgentSpec(1, 1, LOG)], r=0))

    def test_all_violations_reported(self):
        with pytest.raises(ValidationError) as exc:
            validate_scenario(scenario([AgentSpec(0, 1, LOG), AgentSpec(1, -1, LOG)]))
        assert {v.agent for v in exc.value.violations} == {1, 2}

    def test_external_shape_checks(self):
        inc_t = UtilitySpec.external(lambda x, t: (math.log1p(x) + t, 1 / (1 + x), 1.0))
        with pytest.raises(NotDecreasingInT):
            validate_scenario(scenario([AgentSpec(1, 1, inc_t)]))
        convex = UtilitySpec.external(
            lambda x, t: (x * x + x - t, 2 * x + 1, -1.0))
        with pytest.raises(NonConcaveUtility):
            validate_scenario(scenario([AgentSpec(1, 1, convex)]))

    def test_external_coupled_valid(self):
        eps = 0.05
        u = UtilitySpec.external(lambda x, t: (
            math.log1p(x) + math.log(3 - t) + eps * x * t,
            1 / (1 + x) + eps * t, -1 / (3 - t) + eps * x))
        validate_scenario(scenario([AgentSpec(1, 1, u)], L=1))


class TestUtility:
    def test_values(self):
        assert utility_eval(LOG, 0, 0) == pytest.approx(math.log(3))
        assert utility_grad(LOG, 1, 1) == pytest.approx((0.5, -0.5))
        q = UtilitySpec.quad_log(a=3, p=1, b=1, c=2)
        assert utility_eval(q, 1, 0) == pytest.approx(3 - 0.5 + math.log(2))
        assert utility_eval(q, 1, 0) == pytest.approx(3.1931, abs=1e-4)

    def test_domain(self):
        with pytest.raises(DomainError):
            utility_eval(LOG, 0, 3)
        with pytest.raises(DomainError):
            utility_eval(LOG, -1, 0)
        with pytest.raises(BadParameter):
            UtilitySpec("cubic")

    @settings(max_examples=100, deadline=None)
    @given(st.sampled_from(["log-log", "quad-log"]),
           st.floats(0.5, 2), st.floats(0.5, 2), st.floats(0.01, 0.1),
           st.floats(0.0, 1.0), st.floats(0.05, 0.95))
    def test_grad_matches_finite_differences(self, kind, a, b, p, fx, ft):
        u = (UtilitySpec.log_log(a, b, 4) if kind == "log-log"
             else UtilitySpec.quad_log(a, p, b, 4))
        x, t = 3.0 * fx, -3.0 + 6.0 * ft
        h = 1e-6
        fd = ((utility_eval(u, x + h, t) - utility_eval(u, x - h, t)) / (2 * h),
              (utility_eval(u, x, t + h) - utility_eval(u, x, t - h)) / (2 * h))
        an = utility_grad(u, x, t)
        for f, g in zip(fd, an):
            assert f == pytest.approx(g, rel=1e-6, abs=1e-9)


class TestStepsize:
    @pytest.mark.parametrize("r, k, want", [(1, 0, 1.0), (1, 3, 0.25), (0.5, 9, 0.05)])
    def test_values(self, r, k, want):
        assert stepsize(StepsizeSchedule(r), k) == pytest.approx(want)

    def test_partial_sums(self):
        r = 0.7
        s1, s2 = StepsizeSchedule(r).partial_sums(10**6)
        assert np.all(s2 <= r * r * math.pi ** 2 / 6)
        # harmonic growth: at least ln(K+1) * r
        for K in (10, 10**3, 10**6):
            assert s1[K - 1] >= r * math.log(K + 1)
        assert s1[-1] - s1[999] >= r * math.log(1000) - r * 1e-3

    def test_negative_index(self):
        with pytest.raises(ValueError):
            stepsize(StepsizeSchedule(1), -1)


class TestMuIndex:
    def test_declared_order(self):
        assert [mu_index(i, j, 3) for i, j in [(2, 1), (3, 1), (3, 2)]] == [0, 1, 2]
        assert mu_index(4, 1, 4) == 3

    @pytest.mark.parametrize("m", range(1, 11))
    def test_bijection(self, m):
        out = [mu_index(i, j, m) for i, j in mu_pairs(m)]
        assert out == list(range(n_pairs(m)))

    @pytest.mark.parametrize("i, j", [(1, 1), (1, 2), (4, 1)])
    def test_invalid(self, i, j):
        with pytest.raises(IndexError):
            mu_index(i, j, 3)


class TestUpsilon:
    def test_values(self):
        two = validate_scenario(scenario([AgentSpec(1, 1, LOG)] * 2, L=1))
        assert upsilon_bound(two) == 26
        one = validate_scenario(scenario([AgentSpec(1, 3, UtilitySpec.log_log(1, 1, 4))], L=2))
        assert upsilon_bound(one) == 72

    def test_quadratic_scaling(self):
        u = UtilitySpec.log_log(1, 1, 10)
        base = validate_scenario(scenario([AgentSpec(1, 2, u), AgentSpec(1, 1.5, u)], L=1))
        big = validate_scenario(scenario([AgentSpec(1, 4, u), AgentSpec(1, 3, u)], L=1))
        assert upsilon_bound(big) == pytest.approx(4 * upsilon_bound(base))

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0.1, 5), min_size=1, max_size=5), st.floats(0.1, 5),
           st.floats(0.0, 2.0), st.integers(0, 4))
    def test_monotone(self, ws, L, bump, which):
        u = UtilitySpec.log_log(1, 1, 20)
        def ups(ws, L):
            return upsilon_bound(validate_scenario(
                scenario([AgentSpec(1, w, u) for w in ws], L=L), grid=2))
        base = ups(ws, L)
        assert ups(ws, L + bump) >= base
        i = which % len(ws)
        assert ups(ws[:i] + [ws[i] + bump] + ws[i + 1:], L) >= base
        assert ups(ws + [ws[0]], L) >= base
