"""Planner side of the message exchange.

The planner holds the prices, announces them, collects the agents' answers,
keeps the best (lowest) dual value seen so far and takes projected
subgradient steps.  It never sees a utility function or an endowment: the
only inputs here are prices and :class:`AgentResponse` messages.
"""

from __future__ import annotations

import math
from functools import lru_cache
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .model import AgentResponse, Announcement, DualState, mu_index, mu_pairs, n_pairs


class LengthMismatch(ValueError):
    pass


@dataclass(frozen=True)
class BestTracker:
    g_min: float = math.inf
    k_min: int = -1
    lambda_min: Optional[np.ndarray] = None
    mu_min: Optional[np.ndarray] = None
    responses: tuple[AgentResponse, ...] = ()

    @property
    def x_min(self) -> np.ndarray:
        return np.array([r.x_bar for r in self.responses])

    @property
    def t_min(self) -> np.ndarray:
        return np.array([r.t_bar for r in self.responses])


@dataclass(frozen=True)
class ChargeReport:
    gamma: np.ndarray

    @property
    def total(self) -> float:
        return math.fsum(self.gamma)


def init_duals(m: int, mu0: Optional[Sequence[float]] = None) -> DualState:
    """``lam(0) = 0``; ``mu(0)`` is ``mu0`` or zero."""
    if m < 1:
        raise ValueError("need at least one agent")
    if mu0 is None:
        mu = np.zeros(n_pairs(m))
    else:
        mu = np.array(mu0, dtype=float)
        if mu.shape != (n_pairs(m),):
            raise LengthMismatch(f"mu0 must have {n_pairs(m)} entries, got {mu.size}")
    return DualState(np.zeros(m), mu)


@lru_cache(maxsize=None)
def _slice_positions(i: int, m: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    below = tuple(mu_index(i, j, m) for j in range(1, i))
    above = tuple(mu_index(j, i, m) for j in range(i + 1, m + 1))
    return below, above


def announce(state: DualState, i: int) -> Announcement:
    """Message for agent ``i``: every ``lam`` and only the ``mu`` it needs."""
    below, above = _slice_positions(i, state.m)
    mu = state.mu.tolist()
    return Announcement(tuple(state.lam.tolist()),
                        tuple(mu[p] for p in below), tuple(mu[p] for p in above))


def aggregate_dual_value(responses: Sequence[AgentResponse]) -> float:
    return math.fsum(r.g for r in responses)


def update_best(tr: BestTracker, g: float, k: int, state: DualState,
                responses: Sequence[AgentResponse]) -> BestTracker:
    # ties replace: the latest iterate with the lowest value wins
    if g <= tr.g_min:
        return BestTracker(g, k, state.lam.copy(), state.mu.copy(), tuple(responses))
    return tr


def lambda_subgradient(responses: Sequence[AgentResponse]) -> np.ndarray:
    """``s_i = sum_j t_j - x_i``."""
    total = math.fsum(r.t_bar for r in responses)
    return np.array([total - r.x_bar for r in responses])


def mu_subgradient(responses: Sequence[AgentResponse]) -> np.ndarray:
    """``r_ij = x_i - x_j`` in flat ``mu`` order."""
    x = [r.x_bar for r in responses]
    return np.array([x[i - 1] - x[j - 1] for i, j in mu_pairs(len(x))])


def update_lambda(lam: np.ndarray, responses: Sequence[AgentResponse],
                  zeta: float) -> np.ndarray:
    return np.maximum(lam - zeta * lambda_subgradient(responses), 0.0)


def update_mu(mu: np.ndarray, responses: Sequence[AgentResponse],
              zeta: float) -> np.ndarray:
    if mu.size == 0:
        return mu.copy()
    return mu - zeta * mu_subgradient(responses)


def compute_charges(lambda_star: np.ndarray, mu_star: np.ndarray,
                    x_star: Sequence[float], t_star: Sequence[float]) -> ChargeReport:
    """Payment asked of each agent once the prices have settled.

    ``gamma_i = x_i lam_i - x_i c_i - t_i sum(lam)`` with ``c_i`` the agent's
    net ``mu`` coefficient.
    """
    m = len(lambda_star)
    if len(mu_star) != n_pairs(m) or len(x_star) != m or len(t_star) != m:
        raise LengthMismatch("charge inputs disagree on the number of agents")
    state = DualState(np.asarray(lambda_star, dtype=float), np.asarray(mu_star, dtype=float))
    gamma = np.empty(m)
    for i in range(1, m + 1):
        msg = announce(state, i)
        coef = sum(msg.mu_below) - sum(msg.mu_above)
        lam_sum = sum(msg.lam)
        x, t = x_star[i - 1], t_star[i - 1]
        gamma[i - 1] = x * msg.lam[i - 1] - x * coef - t * lam_sum
    return ChargeReport(gamma)
