"""Fair-market (sum q = 1) logarithmic benchmark.

Unconstrained Kelly bets everything with W_i = L_i.  That point satisfies the
risk constraint iff sum_i p_i^(1-lam) q_i^lam <= 1, which always holds for
lam <= 1.  For lam > 1 the full-support interior system

    L_i (W_i^-1 + eta lam W_i^-(lam+1)) = nu,
    sum q_i W_i = 1,   sum p_i W_i^-lam = 1

is solved for (eta, nu); the wealths follow statewise.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import _kernels
from .errors import ConvergenceFailure, NotFair, PreconditionViolated
from .market import Allocation, Regime, SortedMarket, make_allocation

log = logging.getLogger(__name__)

FEASIBILITY_TOL = 1e-12


@dataclass(frozen=True)
class FairSolution:
    W: np.ndarray  # original index order
    eta: float
    nu: float
    feasible_at_kelly: bool
    budget_residual: float = 0.0
    risk_residual: float = 0.0
    method: str = "kelly"

    def to_allocation(self, sm: SortedMarket, lam: float) -> Allocation:
        # zero cash: every state carries a strictly positive stake
        return make_allocation(sm.base, 0.0, sm.base.q * self.W, gamma=1.0, lam=lam)


def _require_fair(sm: SortedMarket) -> None:
    if sm.regime is not Regime.FAIR:
        raise NotFair(f"fair benchmark needs sum q = 1, regime is {sm.regime.value}")


def fair_kelly(sm: SortedMarket) -> np.ndarray:
    _require_fair(sm)
    return sm.base.p / sm.base.q


def kelly_risk(sm: SortedMarket, lam: float) -> float:
    """Risk functional at the fair Kelly point, sum p^(1-lam) q^lam."""
    _require_fair(sm)
    p, q = sm.base.p, sm.base.q
    return math.fsum(np.exp((1.0 - lam) * np.log(p) + lam * np.log(q)))


def fair_feasibility(sm: SortedMarket, lam: float) -> bool:
    return kelly_risk(sm, lam) <= 1.0 + FEASIBILITY_TOL


def wealth_map(L: np.ndarray, eta: float, nu: float, lam: float) -> np.ndarray:
    """W_i solving L_i (W^-1 + eta lam W^-(lam+1)) = nu for each state."""
    t = nu / L
    a = eta * lam
    if a == 0.0:
        return 1.0 / t
    lo = np.maximum(1.0 / t, np.exp(np.log(a / t) / (lam + 1.0)))
    hi = (1.0 + a * np.exp(-lam * np.log(lo))) / t
    w, _ = _kernels.statewise_roots(t, a, lam, lo, hi)
    return w


def _residuals(p, q, L, lam, eta, nu):
    W = wealth_map(L, eta, nu, lam)
    budget = math.fsum(q * W) - 1.0
    risk = math.fsum(p * np.exp(-lam * np.log(W))) - 1.0
    return np.array([budget, risk]), W


def _newton(p, q, L, lam, tol, maxiter=60):
    """Damped Newton in (log eta, log nu) with a forward-difference Jacobian."""
    u = np.array([math.log(1e-3), 0.0])
    F, W = _residuals(p, q, L, lam, *np.exp(u))
    norm = np.abs(F).max()
    for _ in range(maxiter):
        if norm <= tol:
            return np.exp(u), W, F
        J = np.empty((2, 2))
        for j in range(2):
            h = 1e-7 * max(1.0, abs(u[j]))
            du = u.copy()
            du[j] += h
            J[:, j] = (_residuals(p, q, L, lam, *np.exp(du))[0] - F) / h
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            return None
        # log-space steps beyond one unit are never trusted
        damp = min(1.0, 1.0 / max(np.abs(step).max(), 1e-300))
        for _ in range(40):
            trial = u + damp * step
            Ft, Wt = _residuals(p, q, L, lam, *np.exp(trial))
            nt = np.abs(Ft).max()
            if np.isfinite(nt) and nt < norm:
                u, F, W, norm = trial, Ft, Wt, nt
                break
            damp *= 0.5
        else:
            return None
    return (np.exp(u), W, F) if norm <= tol else None


def _nu_for_budget(q, L, lam, eta):
    # budget residual is strictly decreasing in nu
    def budget(log_nu):
        return math.fsum(q * wealth_map(L, eta, math.exp(log_nu), lam)) - 1.0

    lo, hi = -1.0, 1.0
    while budget(lo) < 0:
        lo *= 2.0
    while budget(hi) > 0:
        hi *= 2.0
    return math.exp(brentq(budget, lo, hi, xtol=1e-15, rtol=4 * _kernels.EPS, maxiter=200))


def _nested(p, q, L, lam, tol):
    """Fallback: outer bracket on eta for the risk equation, inner nu from the budget."""

    def risk(log_eta):
        eta = math.exp(log_eta)
        nu = _nu_for_budget(q, L, lam, eta)
        W = wealth_map(L, eta, nu, lam)
        return math.fsum(p * np.exp(-lam * np.log(W))) - 1.0

    lo, hi = -20.0, 0.0
    while risk(hi) > 0:
        hi += 5.0
        if hi > 200:
            raise ConvergenceFailure("risk residual never turns negative in eta")
    while risk(lo) < 0:
        lo -= 10.0
        if lo < -700:
            raise ConvergenceFailure("risk residual never turns positive in eta")
    log_eta = brentq(risk, lo, hi, xtol=1e-14, rtol=4 * _kernels.EPS, maxiter=300)
    eta = math.exp(log_eta)
    nu = _nu_for_budget(q, L, lam, eta)
    F, W = _residuals(p, q, L, lam, eta, nu)
    return np.array([eta, nu]), W, F


def fair_constrained_solve(sm: SortedMarket, lam: float, tol: float = 1e-12) -> FairSolution:
    """Full-support constrained log optimum in a fair market.

    Returns the Kelly point with eta = 0, nu = 1 when it is already feasible.
    """
    _require_fair(sm)
    if not lam > 1.0:
        raise PreconditionViolated(f"interior solve needs lambda > 1, got {lam!r}")
    p, q = sm.base.p, sm.base.q
    L = p / q
    if fair_feasibility(sm, lam):
        return FairSolution(W=L.copy(), eta=0.0, nu=1.0, feasible_at_kelly=True)

    out, method = _newton(p, q, L, lam, tol), "newton"
    if out is None:
        log.info("fair Newton failed for lam=%g; using nested bisection", lam)
        out, method = _nested(p, q, L, lam, tol), "nested"
    (eta, nu), W, F = out
    if np.abs(F).max() > max(tol, 1e-10):
        raise ConvergenceFailure(f"fair interior residuals {F} above tolerance")
    return FairSolution(
        W=W,
        eta=float(eta),
        nu=float(nu),
        feasible_at_kelly=False,
        budget_residual=float(F[0]),
        risk_residual=float(F[1]),
        method=method,
    )
