"""Market data model, likelihood-ratio ordering and the drawdown risk functional."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .errors import (
    LengthMismatch,
    NonPositiveEntry,
    NonPositiveWealth,
    ProbabilityMassError,
    TooFewOutcomes,
)

PROB_MASS_TOL = 1e-9
BUDGET_TOL = 1e-10
REGIME_TOL = 1e-12


class Regime(str, Enum):
    OVERROUND = "Overround"
    FAIR = "Fair"
    SUBFAIR = "Subfair"


@dataclass(frozen=True)
class Market:
    p: np.ndarray
    q: np.ndarray

    @property
    def n(self) -> int:
        return int(self.p.shape[0])

    @property
    def L(self) -> np.ndarray:
        return self.p / self.q


@dataclass(frozen=True)
class SortedMarket:
    """Likelihood-ratio ordered view of a market.

    Arrays indexed by sorted position k = 0..n-1 (the k-th largest ratio).
    ``perm[k]`` is the original index of sorted position k. ``tau[k]`` is NaN
    where the prefix price sum is within tolerance of one.
    """

    base: Market
    perm: np.ndarray
    L: np.ndarray
    p: np.ndarray
    q: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    tail_p: np.ndarray  # 1 - P_k, summed from the tail
    tail_q: np.ndarray  # 1 - Q_k
    tau: np.ndarray
    regime: Regime

    @property
    def n(self) -> int:
        return self.base.n

    def to_original(self, v_sorted) -> np.ndarray:
        out = np.empty_like(np.asarray(v_sorted, dtype=float))
        out[self.perm] = v_sorted
        return out


@dataclass(frozen=True)
class Allocation:
    """Cash, stakes (original index order) and the derived wealth profile."""

    c: float
    x: np.ndarray
    W: np.ndarray
    objective: float
    risk: Optional[float]
    gamma: float = 1.0
    lam: Optional[float] = None

    @property
    def budget_residual(self) -> float:
        return abs(self.c + math.fsum(self.x) - 1.0)

    def support(self, tol: float = 1e-9) -> np.ndarray:
        return np.flatnonzero(self.x > tol)


def _as_vector(v, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1:
        raise LengthMismatch(f"{name} must be a one-dimensional vector")
    if not np.all(np.isfinite(arr)):
        raise NonPositiveEntry(f"{name} has non-finite entries")
    return arr


def validate(p: Sequence[float], q: Sequence[float]) -> Market:
    """Build a Market, refusing anything that is not a clean probability model.

    Probabilities summing to one within ``PROB_MASS_TOL`` are rescaled by
    their sum; larger defects raise ProbabilityMassError.
    """
    p = _as_vector(p, "p")
    q = _as_vector(q, "q")
    if p.shape != q.shape:
        raise LengthMismatch(f"len(p)={p.size} differs from len(q)={q.size}")
    if p.size < 2:
        raise TooFewOutcomes(f"need at least 2 outcomes, got {p.size}")
    if np.any(p <= 0) or np.any(q <= 0):
        raise NonPositiveEntry("all probabilities and state prices must be > 0")
    mass = math.fsum(p)
    if abs(mass - 1.0) > PROB_MASS_TOL:
        raise ProbabilityMassError(f"probabilities sum to {mass!r}, not 1")
    if mass != 1.0:
        p = p / mass
    p.setflags(write=False)
    q = q.copy()
    q.setflags(write=False)
    return Market(p=p, q=q)


def classify_regime(total_price: float, tol: float = REGIME_TOL) -> Regime:
    if total_price > 1.0 + tol:
        return Regime.OVERROUND
    if abs(total_price - 1.0) <= tol:
        return Regime.FAIR
    return Regime.SUBFAIR


def sort_market(m: Market) -> SortedMarket:
    L = m.p / m.q
    # stable sort on -L keeps ties in original index order
    perm = np.argsort(-L, kind="stable")
    Ls, ps, qs = L[perm], m.p[perm], m.q[perm]
    P = np.cumsum(ps)
    Q = np.cumsum(qs)
    n = m.n
    # 1 - P_k as an explicit tail sum avoids cancellation near the end
    tail_p = np.array([math.fsum(ps[k + 1:]) for k in range(n)])
    total_q = math.fsum(qs)
    tail_q = np.array([1.0 - math.fsum(qs[: k + 1]) for k in range(n)])
    tau = np.full(n, np.nan)
    defined = np.abs(tail_q) > REGIME_TOL
    tau[defined] = tail_p[defined] / tail_q[defined]
    for arr in (perm, Ls, ps, qs, P, Q, tail_p, tail_q, tau):
        arr.setflags(write=False)
    return SortedMarket(
        base=m,
        perm=perm,
        L=Ls,
        p=ps,
        q=qs,
        P=P,
        Q=Q,
        tail_p=tail_p,
        tail_q=tail_q,
        tau=tau,
        regime=classify_regime(total_q),
    )


def risk_functional(W, p, lam: float) -> float:
    """Return sum_i p_i W_i^(-lam)."""
    W = np.asarray(W, dtype=float)
    p = np.asarray(p, dtype=float)
    if np.any(W <= 0) or not np.all(np.isfinite(W)):
        raise NonPositiveWealth("risk functional needs strictly positive wealths")
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam!r}")
    return math.fsum(p * np.exp(-lam * np.log(W)))


def crra_utility(W, gamma: float) -> np.ndarray:
    W = np.asarray(W, dtype=float)
    if gamma == 1.0:
        with np.errstate(divide="ignore"):
            return np.log(W)
    return np.power(W, 1.0 - gamma) / (1.0 - gamma)


def expected_utility(W, p, gamma: float) -> float:
    return math.fsum(np.asarray(p) * crra_utility(W, gamma))


def make_allocation(
    m: Market, c: float, x, gamma: float = 1.0, lam: Optional[float] = None
) -> Allocation:
    """Assemble an Allocation, deriving W, objective and (if lam given) risk."""
    x = np.array(x, dtype=float)
    W = c + x / m.q
    if np.all(W > 0):
        objective = expected_utility(W, m.p, gamma)
        risk = risk_functional(W, m.p, lam) if lam is not None else None
    else:
        objective = -math.inf
        risk = math.inf if lam is not None else None
    x.setflags(write=False)
    W.setflags(write=False)
    return Allocation(
        c=float(c), x=x, W=W, objective=objective, risk=risk, gamma=gamma, lam=lam
    )


def slater_witness(sm: SortedMarket, lam: float, max_halvings: int = 200) -> Optional[Allocation]:
    """A strictly feasible point (risk < 1) staking eps on the best state.

    Returns None when no state has a likelihood ratio above one.
    """
    if not sm.L[0] > 1.0:
        return None
    top = int(sm.perm[0])
    eps = 0.1
    for _ in range(max_halvings):
        x = np.zeros(sm.n)
        x[top] = eps
        alloc = make_allocation(sm.base, 1.0 - eps, x, lam=lam)
        if alloc.risk < 1.0 - 1e-12:
            return alloc
        eps *= 0.5
    return None
