"""End-to-end message exchange and its diagnostics.

:func:`run` plays the planner and all agents in one process.  Each iteration
is announce, agent solves, aggregate, best-update, price step.  After the
loop the planner settles on the best iterate seen and computes charges.
"""

from __future__ import annotations

import csv
import io
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from . import agent as agents
from . import planner
from .model import DualState, StepsizeSchedule, ValidatedScenario, upsilon_bound
from .oracle import OracleResult

TRACE_COLUMNS = ("k", "g", "g_min", "s_norm_sq", "r_norm_sq",
                 "payability_gap", "coherence_gap", "zeta")

# full history up to here, then one record in ten
DECIMATE_AFTER = 1_000_000
DECIMATE_EVERY = 10

REASONS = ("residuals-met", "stalled", "max-iters")


@dataclass(frozen=True, slots=True)
class IterationRecord:
    k: int
    g: float
    g_min: float
    s_norm_sq: float
    r_norm_sq: float
    payability_gap: float
    coherence_gap: float
    zeta: float


@dataclass
class Trace:
    records: list[IterationRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def append(self, rec: IterationRecord) -> None:
        if rec.k < DECIMATE_AFTER or rec.k % DECIMATE_EVERY == 0:
            self.records.append(rec)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in self.records:
            w.writerow([r.k] + [repr(float(getattr(r, c))) for c in TRACE_COLUMNS[1:]])
        return buf.getvalue()


@dataclass(frozen=True)
class TerminationCriteria:
    eps_feasible: float
    eps_coherence: float
    eps_stall: float = 1e-6
    window: int = 500

    @classmethod
    def for_scenario(cls, L: float, **overrides) -> "TerminationCriteria":
        eps = 1e-2 * max(1.0, L)
        kw = dict(eps_feasible=eps, eps_coherence=eps)
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kw)


@dataclass(frozen=True)
class RunResult:
    x_star: float
    x_agents: np.ndarray
    t_star: np.ndarray
    lambda_star: np.ndarray
    mu_star: np.ndarray
    g_agents: np.ndarray
    charges: planner.ChargeReport
    g_min: float
    k_min: int
    iterations: int
    reason: str
    payability_gap: float
    coherence_gap: float
    financing_residual: float


@dataclass(frozen=True)
class GapBoundConfig:
    """``Lambda`` bounds the squared distance from the start to a dual solution."""

    Lambda: float
    Upsilon: float
    estimated: bool = False

    def __post_init__(self):
        if not self.Lambda > 0:
            raise ValueError("Lambda must be positive")


def residuals(x: Sequence[float], t: Sequence[float]) -> tuple[float, float, float]:
    """``(payability, coherence, financing)`` gaps of one response profile.

    payability is ``max (x_i - sum t)^+``, coherence ``max |x_i - x_j|`` and
    financing ``max |sum t - x_i|``.
    """
    total = math.fsum(t)
    pay = max(max(xi - total, 0.0) for xi in x)
    coh = max(x) - min(x)
    fin = max(abs(total - xi) for xi in x)
    return pay, coh, fin


def check_termination(tail: Sequence[IterationRecord], best: planner.BestTracker,
                      term: TerminationCriteria) -> bool:
    """Stop when the best iterate is nearly feasible and ``g_min`` has settled.

    ``tail`` is the most recent ``window + 1`` records.
    """
    if len(tail) < term.window + 1 or not best.responses:
        return False
    pay, coh, _ = residuals(best.x_min, best.t_min)
    if pay > term.eps_feasible or coh > term.eps_coherence:
        return False
    return tail[0].g_min - tail[-1].g_min < term.eps_stall


def run(s: ValidatedScenario, max_iters: int = 100_000,
        term: Optional[TerminationCriteria] = None,
        mu0: Optional[Sequence[float]] = None,
        keep_trace: bool = True,
        mu_step_scale: float = 1.0) -> tuple[RunResult, Trace]:
    """Run the exchange for at most ``max_iters`` rounds.

    Without ``term`` every round is played.  With it, the run stops early
    once :func:`check_termination` holds (``residuals-met``) or ``g_min`` has
    not moved at all for ten windows (``stalled``).  ``mu_step_scale``
    multiplies the step used for ``mu``; 1 keeps a single step for both.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    ctxs = agents.contexts(s)
    sched = s.stepsize
    state = planner.init_duals(s.m, mu0)
    best = planner.BestTracker()
    trace = Trace()
    tail: deque[IterationRecord] = deque(maxlen=(term.window + 1) if term else 1)
    frozen_since = 0
    reason = "max-iters"
    k = 0
    for k in range(max_iters):
        zeta = sched(k)
        responses = [agents.respond(c, planner.announce(state, c.index)) for c in ctxs]
        g = planner.aggregate_dual_value(responses)
        prev_min = best.g_min
        best = planner.update_best(best, g, k, state, responses)
        s_vec = planner.lambda_subgradient(responses)
        r_vec = planner.mu_subgradient(responses)
        x = [r.x_bar for r in responses]
        pay, coh, _ = residuals(x, [r.t_bar for r in responses])
        rec = IterationRecord(k, g, best.g_min, float(s_vec @ s_vec), float(r_vec @ r_vec),
                              pay, coh, zeta)
        if keep_trace:
            trace.append(rec)
        state = DualState(planner.update_lambda(state.lam, responses, zeta),
                          planner.update_mu(state.mu, responses, zeta * mu_step_scale))
        if term is None:
            continue
        tail.append(rec)
        frozen_since = frozen_since + 1 if best.g_min == prev_min else 0
        if check_termination(tail, best, term):
            reason = "residuals-met"
            break
        if frozen_since >= 10 * term.window:
            reason = "stalled"
            break
    return _settle(best, k + 1, reason), trace


def _settle(best: planner.BestTracker, iterations: int, reason: str) -> RunResult:
    x, t = best.x_min, best.t_min
    charges = planner.compute_charges(best.lambda_min, best.mu_min, x, t)
    pay, coh, fin = residuals(x, t)
    return RunResult(
        x_star=float(np.mean(x)), x_agents=x, t_star=t,
        lambda_star=best.lambda_min, mu_star=best.mu_min,
        g_agents=np.array([r.g for r in best.responses]),
        charges=charges, g_min=best.g_min, k_min=best.k_min,
        iterations=iterations, reason=reason,
        payability_gap=pay, coherence_gap=coh, financing_residual=fin)


def gap_envelope(ks: Iterable[int], cfg: GapBoundConfig,
                 sched: StepsizeSchedule) -> np.ndarray:
    """``(Lambda + Upsilon sum zeta^2) / (2 sum zeta)`` with sums over 0..k."""
    ks = np.asarray(list(ks), dtype=int)
    if ks.size == 0:
        return np.zeros(0)
    s1, s2 = sched.partial_sums(int(ks.max()) + 1)
    return (cfg.Lambda + cfg.Upsilon * s2[ks]) / (2.0 * s1[ks])


def gap_bound(k: int, cfg: GapBoundConfig, sched: StepsizeSchedule) -> float:
    if k < 0:
        raise ValueError("k must be >= 0")
    return float(gap_envelope([k], cfg, sched)[0])


def dual_distance_sq(start: DualState, lam: np.ndarray, mu: np.ndarray) -> float:
    return float(np.sum((start.lam - lam) ** 2) + np.sum((start.mu - mu) ** 2))


def estimate_Lambda(s: ValidatedScenario, max_iters: int,
                    mu0: Optional[Sequence[float]] = None) -> float:
    """Twice the squared distance from the start to a 10x longer run's duals."""
    ref, _ = run(s, 10 * max_iters, mu0=mu0, keep_trace=False)
    return 2.0 * dual_distance_sq(planner.init_duals(s.m, mu0),
                                  ref.lambda_star, ref.mu_star)


@dataclass(frozen=True)
class Diagnostics:
    ks: np.ndarray
    duality_gap: np.ndarray
    envelope: np.ndarray
    envelope_ok: bool
    weak_duality_ok: bool
    g_min_monotone: bool
    upsilon: float
    upsilon_ok: bool
    upsilon_violations: int
    lambda_estimated: bool
    payability_gap: float
    coherence_gap: float
    final_gap: float
    relative_gap: float

    def summary(self) -> dict:
        return {
            "oracle_gap": self.final_gap,
            "relative_gap": self.relative_gap,
            "envelope_check": "estimated-Λ" if self.lambda_estimated else "supplied-Λ",
            "envelope_ok": self.envelope_ok,
            "weak_duality_ok": self.weak_duality_ok,
            "g_min_monotone": self.g_min_monotone,
            "upsilon": self.upsilon,
            "upsilon_ok": self.upsilon_ok,
            "upsilon_violations": self.upsilon_violations,
            "payability_gap": self.payability_gap,
            "coherence_gap": self.coherence_gap,
        }


def diagnostics(trace: Trace, oracle: OracleResult, cfg: GapBoundConfig,
                sched: StepsizeSchedule, result: Optional[RunResult] = None,
                weak_tol: float = 1e-9) -> Diagnostics:
    ks = trace.column("k").astype(int)
    g = trace.column("g")
    g_min = trace.column("g_min")
    gap = g_min - oracle.value
    env = gap_envelope(ks, cfg, sched)
    norms = trace.column("s_norm_sq") + trace.column("r_norm_sq")
    viol = int(np.count_nonzero(norms > cfg.Upsilon))
    if result is not None:
        pay, coh = result.payability_gap, result.coherence_gap
    else:
        pay, coh = float(trace.records[-1].payability_gap), float(trace.records[-1].coherence_gap)
    final = float(gap[-1])
    return Diagnostics(
        ks=ks, duality_gap=gap, envelope=env,
        envelope_ok=bool(np.all(gap <= env)),
        weak_duality_ok=bool(np.all(g >= oracle.value - weak_tol)),
        g_min_monotone=bool(np.all(np.diff(g_min) <= 0)),
        upsilon=cfg.Upsilon, upsilon_ok=viol == 0, upsilon_violations=viol,
        lambda_estimated=cfg.estimated,
        payability_gap=pay, coherence_gap=coh,
        final_gap=final, relative_gap=abs(final) / (1.0 + abs(oracle.value)))


def gap_config(s: ValidatedScenario, Lambda: Optional[float] = None,
               max_iters: int = 100_000,
               mu0: Optional[Sequence[float]] = None) -> GapBoundConfig:
    if Lambda is not None:
        return GapBoundConfig(Lambda, upsilon_bound(s))
    return GapBoundConfig(estimate_Lambda(s, max_iters, mu0), upsilon_bound(s), estimated=True)
