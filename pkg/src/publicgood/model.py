"""Domain types for the public-good allocation problem.

A scenario is ``m`` agents, each holding a private endowment ``w_i`` and a
private utility ``U_i(x, t_i)`` over the public-good level ``x`` and its own
contribution ``t_i``.  The planner knows only the weights ``alpha_i`` and the
cap ``L``.  Everything in this module is an immutable value; the agent and
planner modules decide who gets to look at which fields.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

KINDS = ("log-log", "quad-log", "external")

# validation grid density per axis
GRID_POINTS = 21


class DomainError(ValueError):
    """A utility was evaluated outside the domain of its logarithms."""


class ValidationError(ValueError):
    """A scenario violates one of the modelling assumptions.

    ``agent`` is the 1-based index of the offending agent, or ``None`` for
    scenario-level problems.  ``violations`` carries every problem found, so
    callers can report all of them at once.
    """

    def __init__(self, message: str, agent: Optional[int] = None):
        prefix = f"agent {agent}: " if agent is not None else ""
        super().__init__(prefix + message)
        self.agent = agent
        self.violations: list[ValidationError] = [self]


class BadParameter(ValidationError):
    pass


class NotIncreasingInX(ValidationError):
    pass


class NotDecreasingInT(ValidationError):
    pass


class NonConcaveUtility(ValidationError):
    pass


# (x, t) -> (value, dU/dx, dU/dt)
Evaluator = Callable[[float, float], tuple[float, float, float]]


@dataclass(frozen=True)
class UtilitySpec:
    """One agent's utility over (public-good level, own contribution).

    log-log:   ``a*ln(1+x) + b*ln(c-t)``
    quad-log:  ``a*x - (p/2)*x**2 + b*ln(c-t)``
    external:  ``evaluator(x, t)`` returns ``(value, dU/dx, dU/dt)``
    """

    kind: str
    a: float = 0.0
    b: float = 0.0
    c: float = 0.0
    p: float = 0.0
    evaluator: Optional[Evaluator] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise BadParameter(f"unknown utility kind {self.kind!r}")
        if self.kind == "external" and self.evaluator is None:
            raise BadParameter("external utility needs an evaluator")

    @classmethod
    def log_log(cls, a: float, b: float, c: float) -> "UtilitySpec":
        return cls("log-log", a=float(a), b=float(b), c=float(c))

    @classmethod
    def quad_log(cls, a: float, p: float, b: float, c: float) -> "UtilitySpec":
        return cls("quad-log", a=float(a), b=float(b), c=float(c), p=float(p))

    @classmethod
    def external(cls, evaluator: Evaluator) -> "UtilitySpec":
        return cls("external", evaluator=evaluator)

    @property
    def separable(self) -> bool:
        return self.kind != "external"


def utility_eval(u: UtilitySpec, x: float, t: float) -> float:
    if u.kind == "external":
        return float(u.evaluator(x, t)[0])
    if t >= u.c:
        raise DomainError(f"t={t!r} outside ln domain (c={u.c!r})")
    if u.kind == "log-log":
        if x <= -1.0:
            raise DomainError(f"x={x!r} outside ln(1+x) domain")
        return u.a * math.log1p(x) + u.b * math.log(u.c - t)
    return u.a * x - 0.5 * u.p * x * x + u.b * math.log(u.c - t)


def utility_grad(u: UtilitySpec, x: float, t: float) -> tuple[float, float]:
    """Analytic partials ``(dU/dx, dU/dt)``."""
    if u.kind == "external":
        _, dx, dt = u.evaluator(x, t)
        return float(dx), float(dt)
    return marginal_x(u, x, t), marginal_t(u, x, t)


def marginal_x(u: UtilitySpec, x: float, t: float = 0.0) -> float:
    if u.kind == "log-log":
        if x <= -1.0:
            raise DomainError(f"x={x!r} outside ln(1+x) domain")
        return u.a / (1.0 + x)
    if u.kind == "quad-log":
        return u.a - u.p * x
    return float(u.evaluator(x, t)[1])


def marginal_t(u: UtilitySpec, x: float, t: float) -> float:
    if u.kind == "external":
        return float(u.evaluator(x, t)[2])
    if t >= u.c:
        raise DomainError(f"t={t!r} outside ln domain (c={u.c!r})")
    return -u.b / (u.c - t)


@dataclass(frozen=True)
class AgentSpec:
    alpha: float
    w: float
    utility: UtilitySpec


@dataclass(frozen=True)
class StepsizeSchedule:
    """Diminishing step ``zeta_k = r / (k + 1)``: not summable, square summable."""

    r: float

    def __call__(self, k: int) -> float:
        return self.r / (k + 1)

    def partial_sums(self, K: int) -> tuple[np.ndarray, np.ndarray]:
        """Cumulative ``sum zeta_i`` and ``sum zeta_i**2`` for i = 0..K-1."""
        z = self.r / np.arange(1, K + 1, dtype=float)
        return np.cumsum(z), np.cumsum(z * z)


def stepsize(sched: StepsizeSchedule, k: int) -> float:
    if k < 0:
        raise ValueError("iteration index must be nonnegative")
    return sched(k)


@dataclass(frozen=True)
class Scenario:
    agents: tuple[AgentSpec, ...]
    L: float
    stepsize: StepsizeSchedule

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))

    @property
    def m(self) -> int:
        return len(self.agents)


@dataclass(frozen=True)
class ValidatedScenario:
    """A scenario that passed :func:`validate_scenario`.

    ``t_max[i]`` is the lower clamp magnitude for agent ``i+1``: the most it
    can ever receive, ``sum of w_j over j != i``.  Any point with
    ``t_i < -t_max[i]`` cannot satisfy ``sum t >= x >= 0``.
    """

    scenario: Scenario
    t_max: tuple[float, ...]

    @property
    def agents(self) -> tuple[AgentSpec, ...]:
        return self.scenario.agents

    @property
    def m(self) -> int:
        return self.scenario.m

    @property
    def L(self) -> float:
        return self.scenario.L

    @property
    def stepsize(self) -> StepsizeSchedule:
        return self.scenario.stepsize

    @property
    def w(self) -> np.ndarray:
        return np.array([a.w for a in self.agents])

    @property
    def alpha(self) -> np.ndarray:
        return np.array([a.alpha for a in self.agents])

    def t_box(self, i: int) -> tuple[float, float]:
        """Contribution interval of agent ``i`` (1-based)."""
        return -self.t_max[i - 1], self.agents[i - 1].w


@dataclass(frozen=True)
class DualState:
    """Planner prices: ``lam`` (one per financing constraint) and ``mu``.

    ``mu`` is flat in the order (2,1), (3,1), (3,2), (4,1), ... -- see
    :func:`mu_index`.
    """

    lam: np.ndarray
    mu: np.ndarray

    @property
    def m(self) -> int:
        return len(self.lam)


@dataclass(frozen=True)
class AgentResponse:
    x_bar: float
    t_bar: float
    g: float


@dataclass(frozen=True)
class Allocation:
    """A public-good level plus the per-agent copies and contributions."""

    x: float
    x_agents: np.ndarray
    t: np.ndarray


def t_max(w: Sequence[float]) -> tuple[float, ...]:
    """``sum_{j != i} w_j`` for every agent."""
    w = list(w)
    return tuple(math.fsum(w[:i] + w[i + 1:]) for i in range(len(w)))


def n_pairs(m: int) -> int:
    return m * (m - 1) // 2


def mu_index(i: int, j: int, m: int) -> int:
    """Flat position of ``mu_ij`` (1-based agent ids, ``i > j``)."""
    if not (1 <= j < i <= m):
        raise IndexError(f"need 1 <= j < i <= m, got i={i}, j={j}, m={m}")
    return (i - 1) * (i - 2) // 2 + (j - 1)


def mu_pairs(m: int) -> list[tuple[int, int]]:
    """All ``(i, j)`` with ``i > j`` in flat ``mu`` order."""
    return [(i, j) for i in range(2, m + 1) for j in range(1, i)]


def upsilon_bound(s: ValidatedScenario) -> float:
    """Bound on ``||s||^2 + ||r||^2`` for the dual subgradients."""
    m = s.m
    big = max([s.L] + [a.w for a in s.agents])
    return (4 * m + m * (m + 1) ** 2) * big * big


def _check_params(k: int, agent: AgentSpec) -> list[ValidationError]:
    out: list[ValidationError] = []
    if not agent.alpha > 0:
        out.append(BadParameter(f"alpha must be > 0, got {agent.alpha!r}", k))
    if not agent.w > 0:
        out.append(BadParameter(f"w must be > 0, got {agent.w!r}", k))
    u = agent.utility
    if u.kind == "external":
        return out
    for name in ("a", "b") + (("p",) if u.kind == "quad-log" else ()):
        if not getattr(u, name) > 0:
            out.append(BadParameter(f"{name} must be > 0, got {getattr(u, name)!r}", k))
    if not u.c > agent.w:
        out.append(BadParameter(f"c must exceed w ({u.c!r} <= {agent.w!r})", k))
    return out


def _check_shape(k: int, agent: AgentSpec, L: float, lo: float,
                 n: int) -> list[ValidationError]:
    u = agent.utility
    xs = np.linspace(0.0, L, n)
    ts = np.linspace(lo, agent.w, n)
    h = 1e-5 * max(1.0, L, agent.w - lo)
    found: dict[type, ValidationError] = {}
    for x in xs:
        for t in ts:
            try:
                dx, dt = utility_grad(u, x, t)
                if not math.isfinite(utility_eval(u, x, t)):
                    raise DomainError("non-finite utility")
                # Hessian from central differences of the analytic gradient
                xp, xm = utility_grad(u, x + h, t), utility_grad(u, x - h, t)
                tp, tm = utility_grad(u, x, t + h), utility_grad(u, x, t - h)
            except DomainError as exc:
                found.setdefault(BadParameter, BadParameter(
                    f"utility undefined at (x={x:.4g}, t={t:.4g}): {exc}", k))
                continue
            if not dx > 0:
                found.setdefault(NotIncreasingInX, NotIncreasingInX(
                    f"dU/dx = {dx:.4g} <= 0 at (x={x:.4g}, t={t:.4g})", k))
            if not dt < 0:
                found.setdefault(NotDecreasingInT, NotDecreasingInT(
                    f"dU/dt = {dt:.4g} >= 0 at (x={x:.4g}, t={t:.4g})", k))
            hxx = (xp[0] - xm[0]) / (2 * h)
            htt = (tp[1] - tm[1]) / (2 * h)
            hxt = 0.25 * ((xp[1] - xm[1]) + (tp[0] - tm[0])) / h
            if not (hxx < 0 and hxx * htt - hxt * hxt > 0):
                found.setdefault(NonConcaveUtility, NonConcaveUtility(
                    f"Hessian not negative definite at (x={x:.4g}, t={t:.4g})", k))
    return list(found.values())


def check_scenario(s: Scenario, grid: int = GRID_POINTS) -> list[ValidationError]:
    """Every assumption violation in ``s`` (empty when valid)."""
    problems: list[ValidationError] = []
    if s.m < 1:
        problems.append(BadParameter("need at least one agent"))
    if not s.L > 0:
        problems.append(BadParameter(f"L must be > 0, got {s.L!r}"))
    if not s.stepsize.r > 0:
        problems.append(BadParameter(f"stepsize r must be > 0, got {s.stepsize.r!r}"))
    for k, agent in enumerate(s.agents, start=1):
        problems.extend(_check_params(k, agent))
    if problems:
        return problems
    lows = t_max([a.w for a in s.agents])
    for k, agent in enumerate(s.agents, start=1):
        problems.extend(_check_shape(k, agent, s.L, -lows[k - 1], grid))
    return problems


def validate_scenario(s: Scenario, grid: int = GRID_POINTS) -> ValidatedScenario:
    """Check the modelling assumptions and attach the contribution clamps.

    Raises the first violation found; ``exc.violations`` lists all of them.
    """
    problems = check_scenario(s, grid)
    if problems:
        first = problems[0]
        first.violations = problems
        raise first
    vs = ValidatedScenario(s, t_max([a.w for a in s.agents]))
    # (x, t) = (0, 0) is always feasible; make sure it evaluates
    for a in s.agents:
        if not math.isfinite(utility_eval(a.utility, 0.0, 0.0)):
            raise BadParameter("utility not finite at the origin")
    return vs


@dataclass(frozen=True)
class Announcement:
    """What the planner sends agent ``i``: all of ``lam`` and its own ``mu`` slice.

    ``mu_below`` holds ``mu_ij`` for ``j < i``; ``mu_above`` holds ``mu_ji``
    for ``j > i``, both in increasing ``j``.
    """

    lam: tuple[float, ...]
    mu_below: tuple[float, ...]
    mu_above: tuple[float, ...]
