"""Centralized reference solver.

Knows everything the planner does not, and solves the welfare problem
directly.  Because every utility is decreasing in the contribution, the
financing constraint binds at the optimum, so the problem collapses to

    V(x) = max { sum_i alpha_i U_i(x, t_i) : sum_i t_i = x, t_i in box_i }

maximized over ``x`` in ``[0, min(L, sum w)]``.  ``V`` is concave, so an
outer golden-section search over ``x`` is exact for this class; the inner
problem is a one-multiplier allocation solved by bisection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .model import UtilitySpec, ValidatedScenario, marginal_t, utility_eval, utility_grad

# bisection on the multiplier stops here or when the bracket cannot shrink;
# value noise near the top of V limits x accuracy to about sqrt(noise)
NU_TOL = 1e-15
INV_PHI = (math.sqrt(5) - 1) / 2


class BracketFailure(RuntimeError):
    pass


class TooLarge(ValueError):
    pass


@dataclass(frozen=True)
class OracleResult:
    x_opt: float
    t_opt: np.ndarray
    value: float
    inner_multiplier: float


def _t_response(alpha: float, u: UtilitySpec, x: float, nu: float,
                lo: float, hi: float) -> float:
    # maximizer of alpha*U(x, t) + nu*t over [lo, hi]
    f = lambda t: alpha * marginal_t(u, x, t) + nu
    if f(lo) <= 0:
        return lo
    if f(hi) >= 0:
        return hi
    return brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def _t_profile(s: ValidatedScenario, x: float, nu: float) -> np.ndarray:
    return np.array([_t_response(a.alpha, a.utility, x, nu, *s.t_box(i))
                     for i, a in enumerate(s.agents, start=1)])


def welfare(s: ValidatedScenario, x: float, t) -> float:
    return math.fsum(a.alpha * utility_eval(a.utility, x, ti)
                     for a, ti in zip(s.agents, t))


def inner_allocation(s: ValidatedScenario, x: float) -> tuple[np.ndarray, float, float]:
    """Best contributions for a fixed level ``x``.

    Returns ``(t, V, nu)``.  ``t`` is taken on the feasible side of the
    multiplier bracket, so ``sum(t) >= x`` up to rounding and ``V`` never
    overstates the optimum.
    """
    lo = 0.0
    if math.fsum(_t_profile(s, x, lo)) >= x:
        t = _t_profile(s, x, lo)
        return t, welfare(s, x, t), lo
    hi = 1.0
    for _ in range(1100):
        if math.fsum(_t_profile(s, x, hi)) >= x:
            break
        lo, hi = hi, 2 * hi
    else:
        raise BracketFailure(f"no multiplier finances x={x!r}")
    while hi - lo > NU_TOL:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if math.fsum(_t_profile(s, x, mid)) >= x:
            hi = mid
        else:
            lo = mid
    t = _t_profile(s, x, hi)
    return t, welfare(s, x, t), hi


def _golden_max(f, a: float, b: float, tol: float) -> tuple[float, float]:
    """Maximize a concave ``f`` on ``[a, b]``; returns ``(x, f(x))``."""
    cands = [(f(a), a), (f(b), b)]
    c, d = b - INV_PHI * (b - a), a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
    cands += [(fc, c), (fd, d)]
    best = max(cands)
    return best[1], best[0]


def centralized_solve(s: ValidatedScenario, tol: float = 1e-8) -> OracleResult:
    hi = min(s.L, math.fsum(a.w for a in s.agents))
    x, _ = _golden_max(lambda x: inner_allocation(s, x)[1], 0.0, hi, tol)
    t, v, nu = inner_allocation(s, x)
    return OracleResult(x, t, v, nu)


def _values(u: UtilitySpec, x: float, ts: np.ndarray) -> np.ndarray:
    if u.kind == "log-log":
        return u.a * math.log1p(x) + u.b * np.log(u.c - ts)
    if u.kind == "quad-log":
        return u.a * x - 0.5 * u.p * x * x + u.b * np.log(u.c - ts)
    return np.array([utility_eval(u, x, t) for t in ts])


def brute_grid_check(s: ValidatedScenario, n: int) -> float:
    """Best welfare over a uniform grid with ``sum t >= x`` enforced.

    The grid has ``n + 1`` points per axis.  The last agent is handled with
    a suffix maximum over its grid, which is still exhaustive: for every
    choice of the others it picks the best feasible grid value.
    """
    m = s.m
    if m > 3:
        raise TooLarge(f"grid check costs n^(m+1); m={m} > 3")
    xs = np.linspace(0.0, s.L, n + 1)
    grids = [np.linspace(*s.t_box(i), n + 1) for i in range(1, m + 1)]
    last = grids[-1]
    # partial sums of contributions over agents 1..m-1
    t_rest = np.zeros(1)
    for g in grids[:-1]:
        t_rest = np.add.outer(t_rest, g).ravel()
    best = -math.inf
    for x in xs:
        v_rest = np.zeros(1)
        for a, g in zip(s.agents[:-1], grids[:-1]):
            v_rest = np.add.outer(v_rest, a.alpha * _values(a.utility, x, g)).ravel()
        last_agent = s.agents[-1]
        v_last = last_agent.alpha * _values(last_agent.utility, x, last)
        suffix = np.maximum.accumulate(v_last[::-1])[::-1]
        idx = np.searchsorted(last, x - t_rest, side="left")
        ok = idx < last.size
        if not ok.any():
            continue
        total = v_rest[ok] + suffix[idx[ok]]
        best = max(best, float(total.max()))
    return best


def grid_cell_variation(s: ValidatedScenario, n: int) -> float:
    """Largest welfare change across one grid cell of :func:`brute_grid_check`.

    Built from bounds on ``|dU/dx|`` and ``|dU/dt|`` over each agent's box.
    """
    hx = s.L / n
    total = 0.0
    for i, a in enumerate(s.agents, start=1):
        lo, hi = s.t_box(i)
        ht = (hi - lo) / n
        u = a.utility
        if u.kind == "log-log":
            gx, gt = u.a, u.b / (u.c - hi)
        elif u.kind == "quad-log":
            gx, gt = max(abs(u.a), abs(u.a - u.p * s.L)), u.b / (u.c - hi)
        else:
            pts = [utility_grad(u, x, t) for x in np.linspace(0, s.L, 41)
                   for t in np.linspace(lo, hi, 41)]
            gx = max(abs(p[0]) for p in pts)
            gt = max(abs(p[1]) for p in pts)
        total += a.alpha * (gx * hx + gt * ht)
    return total
