"""Unconstrained CRRA optimizers in the overround regime.

The optimal support is the top-k* block of states in likelihood-ratio order,
with k* the unique index where L_k > tau_k >= L_{k+1}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError, NonUniquePrefix, NoPrefix, NotOverround
from .market import Allocation, Regime, SortedMarket, make_allocation


@dataclass(frozen=True)
class SolverParams:
    gamma: float = 1.0
    lam: float = 1.0

    def __post_init__(self):
        for name in ("gamma", "lam"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be positive and finite, got {v!r}")


@dataclass(frozen=True)
class PrefixSelection:
    """The active prefix and the statistics the solvers need from it.

    ``k_star`` is 1-based (number of active states).  ``p``, ``q``, ``L`` and
    ``r`` hold the active states in sorted order.
    """

    k_star: int
    tau_star: float
    P_star: float
    Q_star: float
    tail_p: float  # 1 - P_star
    tail_q: float  # 1 - Q_star
    p: np.ndarray
    q: np.ndarray
    L: np.ndarray
    r: np.ndarray


@dataclass(frozen=True)
class CrraSolution:
    allocation: Allocation
    selection: Optional[PrefixSelection]
    all_cash: bool = False


def prefix_candidates(sm: SortedMarket) -> list:
    """All 1-based k in 1..n-1 with Q_k < 1 and L_k > tau_k >= L_{k+1}."""
    found = []
    for k in range(sm.n - 1):
        if not sm.tail_q[k] > 0 or math.isnan(sm.tau[k]):
            continue
        t = sm.tau[k]
        if sm.L[k] > t >= sm.L[k + 1]:
            found.append(k + 1)
    return found


def find_prefix(sm: SortedMarket) -> PrefixSelection:
    if sm.regime is not Regime.OVERROUND:
        raise NotOverround(f"prefix theory needs an overround market, regime is {sm.regime.value}")
    found = prefix_candidates(sm)
    if not found:
        beats = [
            sm.L[k] > sm.tau[k]
            for k in range(sm.n - 1)
            if sm.tail_q[k] > 0 and not math.isnan(sm.tau[k])
        ]
        all_cash = not any(beats)
        msg = "no prefix index satisfies L_k > tau_k >= L_{k+1}"
        if all_cash:
            msg += " (no state beats its threshold: the optimum holds cash only)"
        raise NoPrefix(msg, all_cash=all_cash)
    if len(found) > 1:
        raise NonUniquePrefix(f"prefix condition holds for several k: {found}", found)
    k = found[0]
    tau = float(sm.tau[k - 1])
    L = sm.L[:k].copy()
    r = L / tau
    return PrefixSelection(
        k_star=k,
        tau_star=tau,
        P_star=float(sm.P[k - 1]),
        Q_star=float(sm.Q[k - 1]),
        tail_p=float(sm.tail_p[k - 1]),
        tail_q=float(sm.tail_q[k - 1]),
        p=sm.p[:k].copy(),
        q=sm.q[:k].copy(),
        L=L,
        r=r,
    )


def _stakes_original(sm: SortedMarket, active_stakes: np.ndarray) -> np.ndarray:
    x_sorted = np.zeros(sm.n)
    x_sorted[: active_stakes.size] = active_stakes
    return sm.to_original(x_sorted)


def solve_unconstrained_crra(
    sel: PrefixSelection, sm: SortedMarket, gamma: float, lam: Optional[float] = None
) -> Allocation:
    """Closed-form CRRA optimum on the prefix; ``lam`` only sets the reported risk."""
    SolverParams(gamma=gamma)
    ratio = np.exp(np.log(sel.r) / gamma)  # (L_i / tau*)^(1/gamma)
    c = 1.0 / (sel.tail_q + math.fsum(sel.q * ratio))
    x = sel.q * c * (ratio - 1.0)
    return make_allocation(sm.base, c, _stakes_original(sm, x), gamma=gamma, lam=lam)


def solve_kelly(sel: PrefixSelection, sm: SortedMarket, lam: Optional[float] = None) -> Allocation:
    """Ordinary Kelly: cash tau*, stakes q_i (L_i - tau*) on the prefix."""
    x = sel.q * (sel.L - sel.tau_star)
    return make_allocation(sm.base, sel.tau_star, _stakes_original(sm, x), gamma=1.0, lam=lam)


def all_cash_allocation(sm: SortedMarket, gamma: float = 1.0, lam: Optional[float] = None) -> Allocation:
    return make_allocation(sm.base, 1.0, np.zeros(sm.n), gamma=gamma, lam=lam)


def optimal_unconstrained(sm: SortedMarket, gamma: float = 1.0, lam: Optional[float] = None) -> CrraSolution:
    """find_prefix + closed form, mapping the no-advantage case to all cash."""
    try:
        sel = find_prefix(sm)
    except NoPrefix as exc:
        if not exc.all_cash:
            raise
        return CrraSolution(all_cash_allocation(sm, gamma, lam), None, all_cash=True)
    if gamma == 1.0:
        alloc = solve_kelly(sel, sm, lam)
    else:
        alloc = solve_unconstrained_crra(sel, sm, gamma, lam)
    return CrraSolution(alloc, sel)
