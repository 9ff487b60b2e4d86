"""Brute-force reference solver and KKT auditor.

``brute_force_solve`` enumerates every candidate stake support A.  On a fixed
support with positive cash the first-order system collapses onto the ratios
z_i = W_i / c, which solve

    r_i (z^-gamma + s z^-(lam+1)) = 1 + s,   r_i = L_i / tau_A,

for one scalar s >= 0 (s = 0 when the risk constraint is slack).  Cash then
follows from the budget and s is pinned by the risk equation, located here by
a coarse scan plus Brent refinement.  The full support is handled with zero
cash through an outer (eta, nu) search.  Each candidate that is primal
feasible is scored and the best is kept; a local lattice and a random cloud
over the budget simplex then check that nothing beats it.

This module shares no numerical code with the analytic solvers.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .errors import ConvergenceFailure, NotOverround, OutOfRange, ResolutionTooCoarse
from .market import Allocation, Market, Regime, classify_regime, make_allocation

MAX_OUTCOMES = 8
SUPPORT_TOL = 1e-9
KKT_TOL = 1e-8
GRID_SLACK = 1e-8
_S_SCAN = np.concatenate(([0.0], np.geomspace(1e-8, 1e12, 81)))


def _ratio_roots(r, s, gamma, lam):
    """z > 1 solving r (z^-gamma + s z^-(lam+1)) = 1 + s, broadcast over r and s.

    Newton in u = log z on a convex decreasing function, started at u = 0.
    """
    r, s = np.broadcast_arrays(np.asarray(r, float), np.asarray(s, float))
    logr = np.log(r)
    u_hi = logr * max(1.0 / gamma, 1.0 / (lam + 1.0))
    u = np.zeros(r.shape)
    for _ in range(200):
        e1 = r * np.exp(-gamma * u)
        e2 = r * s * np.exp(-(lam + 1.0) * u)
        g = e1 + e2 - (1.0 + s)
        dg = -gamma * e1 - (lam + 1.0) * e2
        # iterates climb monotonically; g <= 0 means round-off has reached the root
        un = np.where(g > 0.0, np.minimum(u - g / dg, u_hi), u)
        if np.all(un - u <= 4e-16 * un):
            u = un
            break
        u = un
    return np.exp(u)


@dataclass
class _Candidate:
    support: tuple
    c: float
    x_sorted: np.ndarray
    objective: float
    risk: float
    eta: float
    nu: float


def _utility(W, gamma):
    if gamma == 1.0:
        return np.log(W)
    return W ** (1.0 - gamma) / (1.0 - gamma)


def _score(p, W, gamma, lam):
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        obj = float(np.sum(p * _utility(W, gamma), axis=-1))
        risk = float(np.sum(p * W ** (-lam), axis=-1))
    return obj, risk


class _Problem:
    def __init__(self, m: Market, gamma: float, lam: Optional[float]):
        self.m = m
        self.gamma = gamma
        self.lam = lam
        L = m.p / m.q
        self.order = np.argsort(-L, kind="stable")
        self.p = m.p[self.order]
        self.q = m.q[self.order]
        self.L = L[self.order]
        self.n = m.n

    def risk_of(self, W):
        return float(np.sum(self.p * W ** (-self.lam))) if self.lam is not None else 0.0

    # fixed support, positive cash
    def cash_candidates(self, A):
        A = np.array(A, dtype=int)
        inactive = np.setdiff1d(np.arange(self.n), A)
        pA, qA, LA = self.p[A], self.q[A], self.L[A]
        tail_q = 1.0 - float(np.sum(qA))
        tail_p = float(np.sum(self.p[inactive]))
        if tail_q <= 0.0 or tail_p <= 0.0:
            return []
        tau = tail_p / tail_q
        r = LA / tau
        if np.any(r <= 1.0):
            # stationarity would force W_i <= c on a funded state
            return []
        gamma, lam = self.gamma, self.lam

        def build(s):
            z = _ratio_roots(r, s, gamma, lam if lam is not None else 1.0)
            c = 1.0 / (tail_q + float(np.sum(qA * z)))
            return z, c

        def risk_minus_one(s):
            z, c = build(s)
            return c ** (-lam) * (tail_p + float(np.sum(pA * z ** (-lam)))) - 1.0

        roots = [0.0]
        if lam is not None and risk_minus_one(0.0) > 0.0:
            roots = []
            Z = _ratio_roots(r[None, :], _S_SCAN[:, None], gamma, lam)
            C = 1.0 / (tail_q + Z @ qA)
            R = C ** (-lam) * (tail_p + (Z ** (-lam)) @ pA) - 1.0
            for k in np.flatnonzero(np.sign(R[:-1]) != np.sign(R[1:])):
                a, b = _S_SCAN[k], _S_SCAN[k + 1]
                if R[k + 1] == 0.0:
                    roots.append(b)
                    continue
                roots.append(brentq(risk_minus_one, a, b, xtol=1e-300, rtol=1e-15, maxiter=400))
        out = []
        for s in roots:
            z, c = build(s)
            x = np.zeros(self.n)
            x[A] = qA * c * (z - 1.0)
            W = c + x / self.q
            lam_eff = lam if lam is not None else 1.0
            eta = s * c ** (lam_eff + 1.0 - gamma) / lam_eff if lam is not None else 0.0
            h_c = c ** (-gamma) + eta * lam_eff * c ** (-(lam_eff + 1.0))
            obj, risk = _score(self.p, W, gamma, lam_eff)
            out.append(_Candidate(tuple(A), c, x, obj, risk if lam is not None else 0.0, eta, tau * h_c))
        return out

    # full support, zero cash
    def _wealths(self, eta, nu):
        """W solving L_i (W^-gamma + eta lam W^-(lam+1)) = nu, Newton in log W.

        The left side is convex and decreasing in log W, so Newton started
        where it exceeds the target climbs monotonically to the root.
        """
        gamma, lam = self.gamma, (self.lam or 1.0)
        target = nu / self.L
        a = eta * lam
        u = -np.log(target) / gamma
        if a > 0:
            u = np.maximum(u, np.log(a / target) / (lam + 1.0))
        for _ in range(200):
            e1 = np.exp(-gamma * u)
            e2 = a * np.exp(-(lam + 1.0) * u)
            g = e1 + e2 - target
            dg = -gamma * e1 - (lam + 1.0) * e2
            un = np.where(g > 0.0, u - g / dg, u)
            if np.all(np.abs(un - u) <= 4e-16 * np.maximum(np.abs(un), 1.0)):
                u = un
                break
            u = un
        return np.exp(u)

    def _nu_budget(self, eta):
        def f(log_nu):
            return float(np.sum(self.q * self._wealths(eta, math.exp(log_nu)))) - 1.0

        # without the risk term nu has a closed form; the penalty only raises it
        g = self.gamma
        lo = g * math.log(float(np.sum(self.q * self.L ** (1.0 / g))))
        hi = lo + 0.5
        while f(hi) > 0:
            lo, hi = hi, hi + 2.0 * (hi - lo)
        if f(lo) < 0:
            return math.exp(lo)
        return math.exp(brentq(f, lo, hi, xtol=1e-300, rtol=1e-15, maxiter=400))

    def full_support_candidates(self):
        lam = self.lam

        def make(eta):
            nu = self._nu_budget(eta)
            W = self._wealths(eta, nu)
            return W, nu

        def risk_minus_one(log_eta):
            W, _ = make(math.exp(log_eta))
            return self.risk_of(W) - 1.0

        W, nu = make(0.0)
        etas = [(0.0, W, nu)]
        if lam is not None and self.risk_of(W) > 1.0:
            # risk of the fixed-support penalized optimum is nonincreasing in eta
            etas = []
            lo, hi = -30.0, -12.0
            while hi <= 40.0 and risk_minus_one(hi) > 0.0:
                lo, hi = hi, hi + 4.0
            if hi <= 40.0:
                le = brentq(risk_minus_one, lo, hi, xtol=1e-14, rtol=1e-15, maxiter=400)
                W, nu = make(math.exp(le))
                etas.append((math.exp(le), W, nu))
        out = []
        for eta, W, nu in etas:
            x = self.q * W
            obj, risk = _score(self.p, W, self.gamma, lam or 1.0)
            out.append(_Candidate(tuple(range(self.n)), 0.0, x, obj, risk if lam is not None else 0.0, eta, nu))
        return out


@dataclass(frozen=True)
class OracleResult:
    allocation: Allocation
    support: tuple  # original indices with stakes above SUPPORT_TOL
    eta: float
    nu: float
    candidates_scored: int
    grid_best_gap: float  # best grid objective minus enumeration objective


def _feasible(cand: _Candidate, lam) -> bool:
    if not math.isfinite(cand.objective):
        return False
    if lam is not None and cand.risk > 1.0 + 1e-10:
        return False
    return bool(np.all(cand.x_sorted >= -1e-14))


def _grid_check(prob: _Problem, best: _Candidate, resolution: int) -> float:
    """Best objective over a lattice around the winner and a random simplex cloud."""
    n = prob.n
    base = np.concatenate(([best.c], best.x_sorted))
    pts = []
    steps = np.arange(1, resolution + 1) / resolution
    for scale in (1e-1, 1e-3, 1e-5):
        d = steps * scale
        for i, j in itertools.permutations(range(n + 1), 2):
            pt = np.repeat(base[None, :], d.size, axis=0)
            pt[:, i] += d
            pt[:, j] -= d
            pts.append(pt)
    rng = np.random.default_rng(20240917)
    pts.append(rng.dirichlet(np.ones(n + 1), size=50 * resolution))
    pts.append(rng.dirichlet(np.full(n + 1, 0.3), size=50 * resolution))
    P = np.vstack(pts)
    P = P[np.all(P >= 0.0, axis=1)]
    W = P[:, :1] + P[:, 1:] / prob.q
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        obj = np.sum(prob.p * _utility(W, prob.gamma), axis=1)
        ok = np.all(W > 0, axis=1)
        if prob.lam is not None:
            ok &= np.sum(prob.p * W ** (-prob.lam), axis=1) <= 1.0
    if not ok.any():
        return -math.inf
    return float(obj[ok].max() - best.objective)


def brute_force_solve(
    m: Market,
    gamma: float,
    lam: Optional[float],
    resolution: int = 50,
    check_grid: bool = True,
) -> OracleResult:
    """Global optimum by support enumeration; ``lam=None`` drops the risk constraint."""
    if m.n > MAX_OUTCOMES:
        raise OutOfRange(f"oracle supports at most {MAX_OUTCOMES} outcomes, got {m.n}")
    if resolution < 50:
        raise ResolutionTooCoarse(f"resolution must be >= 50, got {resolution}")
    prob = _Problem(m, gamma, lam)
    cands = prob.full_support_candidates()
    for size in range(m.n - 1, -1, -1):
        for A in itertools.combinations(range(m.n), size):
            if size == 0:
                z = np.zeros(m.n)
                obj, risk = _score(prob.p, np.ones(m.n), gamma, lam or 1.0)
                cands.append(_Candidate((), 1.0, z, obj, 1.0 if lam is not None else 0.0, 0.0, 1.0))
            else:
                cands.extend(prob.cash_candidates(A))
    feasible = [c for c in cands if _feasible(c, lam)]
    best = feasible[0]
    for c in feasible[1:]:
        # larger supports come first, so ties keep the fuller representation
        if c.objective > best.objective + 1e-13:
            best = c
    gap = _grid_check(prob, best, resolution) if check_grid else -math.inf
    if gap > GRID_SLACK:
        raise ConvergenceFailure(f"grid point beats enumeration winner by {gap:.3e}")
    x = np.empty(m.n)
    x[prob.order] = np.maximum(best.x_sorted, 0.0)
    alloc = make_allocation(m, best.c, x, gamma=gamma, lam=lam)
    return OracleResult(
        allocation=alloc,
        support=tuple(int(i) for i in np.flatnonzero(x > SUPPORT_TOL)),
        eta=best.eta,
        nu=best.nu,
        candidates_scored=len(feasible),
        grid_best_gap=gap,
    )


def check_full_support_obstruction(m: Market, gamma: float, lam: Optional[float], resolution: int = 50) -> bool:
    """True iff the oracle optimum leaves at least one state unstaked."""
    if classify_regime(float(np.sum(m.q))) is not Regime.OVERROUND:
        raise NotOverround("the obstruction statement concerns overround markets")
    res = brute_force_solve(m, gamma, lam, resolution)
    return bool(np.any(res.allocation.x <= SUPPORT_TOL))


@dataclass(frozen=True)
class KktReport:
    nu: float
    eta: float
    rho: float
    mu: np.ndarray
    stationarity_residuals: np.ndarray  # per stake, then cash
    complementarity_residuals: np.ndarray  # mu_i x_i ..., rho c, eta (risk - 1)
    primal_residuals: dict = field(default_factory=dict)
    feasible: bool = True
    tol: float = KKT_TOL

    @property
    def max_residual(self) -> float:
        vals = [np.abs(self.stationarity_residuals).max(), np.abs(self.complementarity_residuals).max()]
        vals.extend(abs(v) for v in self.primal_residuals.values())
        return float(max(vals))

    @property
    def passed(self) -> bool:
        return self.feasible and self.max_residual <= self.tol


def audit_kkt(m: Market, gamma: float, lam: Optional[float], alloc: Allocation, tol: float = KKT_TOL) -> KktReport:
    """Reconstruct multipliers from the active equations and report every residual."""
    p, q = m.p, m.q
    L = p / q
    W = alloc.c + alloc.x / q
    if np.any(W <= 0):
        raise ValueError("audit needs strictly positive wealths")
    lam_eff = lam if lam is not None else 1.0
    u1 = W ** (-gamma)  # marginal utility
    u2 = lam_eff * W ** (-(lam_eff + 1.0))  # risk-gradient factor
    risk = float(np.sum(p * W ** (-lam_eff))) if lam is not None else 0.0
    active = alloc.x > SUPPORT_TOL
    cash_pos = alloc.c > SUPPORT_TOL
    risk_active = lam is not None and risk >= 1.0 - 1e-9

    # rows: L_i u1_i = nu - eta L_i u2_i (active stakes), sum p u1 = nu - eta sum p u2 (cash > 0)
    rows, rhs = [], []
    for i in np.flatnonzero(active):
        rows.append([1.0, -L[i] * u2[i]])
        rhs.append(L[i] * u1[i])
    if cash_pos:
        rows.append([1.0, -float(np.sum(p * u2))])
        rhs.append(float(np.sum(p * u1)))
    A = np.array(rows).reshape(-1, 2)
    b = np.array(rhs)
    eta = 0.0
    if risk_active and len(rows) >= 2:
        sol, *_ = np.linalg.lstsq(A, b, rcond=None)
        nu, eta = float(sol[0]), float(sol[1])
        if eta < 0:
            eta = 0.0
            nu = float(np.mean(b))
    elif len(rows):
        nu = float(np.mean(b))
    else:
        nu = float(np.sum(p * u1))

    h = u1 + eta * u2
    mu = nu - L * h
    mu_inactive = np.where(active, 0.0, mu)
    stat_x = np.where(active, mu, np.minimum(mu_inactive, 0.0))
    rho = nu - float(np.sum(p * h))
    stat_c = rho if cash_pos else min(rho, 0.0)
    comp = np.concatenate((mu_inactive * alloc.x, [max(rho, 0.0) * alloc.c]))
    if lam is not None:
        comp = np.append(comp, eta * (risk - 1.0))
    primal = {
        "budget": alloc.c + float(np.sum(alloc.x)) - 1.0,
        "nonnegativity": float(min(0.0, alloc.c, alloc.x.min())),
    }
    feasible = abs(primal["budget"]) <= tol and primal["nonnegativity"] >= -tol
    if lam is not None:
        primal["risk_excess"] = max(0.0, risk - 1.0)
        feasible = feasible and risk <= 1.0 + tol
    return KktReport(
        nu=nu,
        eta=eta,
        rho=max(rho, 0.0) if cash_pos else rho,
        mu=np.where(active, 0.0, mu),
        stationarity_residuals=np.append(stat_x, stat_c),
        complementarity_residuals=comp,
        primal_residuals=primal,
        feasible=feasible,
        tol=tol,
    )
