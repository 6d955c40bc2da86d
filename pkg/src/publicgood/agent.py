"""Agent side of the message exchange.

An agent sees the announced prices and its own private data, and answers
with its preferred ``(x_i, t_i)`` and the optimal value of its local
problem::

    maximize  alpha U(x, t) + t * sum(lam) - x * lam_i + x * c_i
    over      0 <= x <= L,  -t_max_i <= t <= w_i

where ``c_i = sum_{j<i} mu_ij - sum_{j>i} mu_ji``.  Nothing here is visible
to the planner except the returned :class:`AgentResponse`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from .model import (AgentResponse, AgentSpec, Announcement, ValidatedScenario,
                    marginal_t, marginal_x, mu_index, utility_eval)

BRACKET_TOL = 1e-12
MOVE_TOL = 1e-10
MAX_SWEEPS = 100_000

METHODS = ("closed", "bisect", "coordinate")


class NumericalFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class AgentContext:
    """One agent's private view: its id (1-based), spec, and box."""

    index: int
    spec: AgentSpec
    t_max: float
    L: float
    m: int

    @property
    def t_lo(self) -> float:
        return -self.t_max

    @property
    def t_hi(self) -> float:
        return self.spec.w


def contexts(vs: ValidatedScenario) -> list[AgentContext]:
    return [AgentContext(i, a, vs.t_max[i - 1], vs.L, vs.m)
            for i, a in enumerate(vs.agents, start=1)]


def mu_coefficient(i: int, mu: Sequence[float], m: int) -> float:
    """``sum_{j<i} mu_ij - sum_{j>i} mu_ji`` for agent ``i`` (1-based)."""
    below = sum(mu[mu_index(i, j, m)] for j in range(1, i))
    above = sum(mu[mu_index(j, i, m)] for j in range(i + 1, m + 1))
    return below - above


def _objective(ctx: AgentContext, lam_i: float, lam_sum: float, coef: float,
               x: float, t: float) -> float:
    return (ctx.spec.alpha * utility_eval(ctx.spec.utility, x, t)
            + t * lam_sum - x * lam_i + x * coef)


def agent_objective(ctx: AgentContext, lam: Sequence[float], mu: Sequence[float],
                    x: float, t: float) -> float:
    coef = mu_coefficient(ctx.index, mu, ctx.m)
    return _objective(ctx, lam[ctx.index - 1], sum(lam), coef, x, t)


def maximize_1d(deriv: Callable[[float], float], lo: float, hi: float,
                tol: float = BRACKET_TOL) -> float:
    """Maximizer on ``[lo, hi]`` of a concave function given its derivative."""
    if deriv(lo) <= 0:
        return lo
    if deriv(hi) >= 0:
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if deriv(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _clamp(v: float, lo: float, hi: float) -> float:
    return lo if v < lo else hi if v > hi else v


def _closed_x(ctx: AgentContext, kappa: float) -> float:
    u, alpha = ctx.spec.utility, ctx.spec.alpha
    if u.kind == "log-log":
        if kappa >= 0:
            return ctx.L
        return _clamp(-alpha * u.a / kappa - 1.0, 0.0, ctx.L)
    return _clamp((alpha * u.a + kappa) / (alpha * u.p), 0.0, ctx.L)


def _closed_t(ctx: AgentContext, lam_sum: float) -> float:
    u, alpha = ctx.spec.utility, ctx.spec.alpha
    if lam_sum <= 0:
        return ctx.t_lo
    return _clamp(u.c - alpha * u.b / lam_sum, ctx.t_lo, ctx.t_hi)


def _bisect_parts(ctx: AgentContext, kappa: float, lam_sum: float) -> tuple[float, float]:
    u, alpha = ctx.spec.utility, ctx.spec.alpha
    x = maximize_1d(lambda x: alpha * marginal_x(u, x) + kappa, 0.0, ctx.L)
    t = maximize_1d(lambda t: alpha * marginal_t(u, 0.0, t) + lam_sum,
                    ctx.t_lo, ctx.t_hi)
    return x, t


def _coordinate_ascent(ctx: AgentContext, kappa: float, lam_sum: float,
                       max_sweeps: int = MAX_SWEEPS) -> tuple[float, float]:
    u, alpha = ctx.spec.utility, ctx.spec.alpha
    x, t = 0.5 * ctx.L, 0.5 * (ctx.t_lo + ctx.t_hi)
    for _ in range(max_sweeps):
        x_new = maximize_1d(lambda v: alpha * marginal_x(u, v, t) + kappa,
                            0.0, ctx.L)
        t_new = maximize_1d(lambda v: alpha * marginal_t(u, x_new, v) + lam_sum,
                            ctx.t_lo, ctx.t_hi)
        moved = max(abs(x_new - x), abs(t_new - t))
        x, t = x_new, t_new
        if moved < MOVE_TOL:
            return x, t
    raise NumericalFailure(
        f"agent {ctx.index}: coordinate ascent did not settle in {max_sweeps} sweeps")


def _solve(ctx: AgentContext, lam_i: float, lam_sum: float, coef: float,
           method: Optional[str]) -> AgentResponse:
    if method is None:
        method = "closed" if ctx.spec.utility.separable else "coordinate"
    kappa = coef - lam_i
    if method == "closed":
        if not ctx.spec.utility.separable:
            raise ValueError("closed form needs a built-in utility")
        x, t = _closed_x(ctx, kappa), _closed_t(ctx, lam_sum)
    elif method == "bisect":
        if not ctx.spec.utility.separable:
            raise ValueError("per-coordinate bisection needs a separable utility")
        x, t = _bisect_parts(ctx, kappa, lam_sum)
    elif method == "coordinate":
        x, t = _coordinate_ascent(ctx, kappa, lam_sum)
    else:
        raise ValueError(f"unknown method {method!r}")
    return AgentResponse(x, t, _objective(ctx, lam_i, lam_sum, coef, x, t))


def solve_agent(ctx: AgentContext, lam: Sequence[float], mu: Sequence[float],
                method: Optional[str] = None) -> AgentResponse:
    """Best response to prices ``(lam, mu)``.

    ``method`` picks the solver: ``"closed"`` (stationary point clamped to
    the box), ``"bisect"`` (derivative bisection per coordinate) or
    ``"coordinate"`` (2-D projected coordinate ascent, the only option for
    external utilities).  Defaults to the cheapest one that applies.
    """
    coef = mu_coefficient(ctx.index, mu, ctx.m)
    return _solve(ctx, lam[ctx.index - 1], sum(lam), coef, method)


def respond(ctx: AgentContext, msg: Announcement,
            method: Optional[str] = None) -> AgentResponse:
    """Answer a planner announcement carrying only this agent's ``mu`` slice."""
    coef = sum(msg.mu_below) - sum(msg.mu_above)
    return _solve(ctx, msg.lam[ctx.index - 1], sum(msg.lam), coef, method)
