"""Constrained logarithmic solver: calibrate one scaled multiplier s.

On the fixed prefix, each active state's wealth-to-cash ratio z_i(s) solves

    (1 + s) z^(lam+1) - r_i z^lam - r_i s = 0,

cash is c(s) = 1 / B(s) with B(s) = 1 + sum_A q_i (z_i(s) - 1), and the
risk along the path is

    R(s) = c(s)^(-lam) * ((1 - P*) + sum_A p_i z_i(s)^(-lam)).

R is strictly decreasing, so the binding solution is the unique root of
R(s) = 1 whenever R(0) > 1.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .crra import PrefixSelection, find_prefix, solve_kelly
from .errors import (
    ConvergenceFailure,
    DomainError,
    KellyError,
    NoPrefix,
    NotOverround,
    OutOfRange,
)
from .market import Allocation, Regime, SortedMarket, make_allocation

log = logging.getLogger(__name__)

TOL_INNER = 1e-13
TOL_OUTER = 1e-12
LAMBDA_MAX = 1e3
MAX_OUTER = 200


def _check_lambda(lam: float) -> None:
    if not (lam > 0 and math.isfinite(lam)):
        raise DomainError(f"lambda must be positive and finite, got {lam!r}")
    if lam > LAMBDA_MAX:
        raise OutOfRange(f"lambda={lam!r} exceeds supported maximum {LAMBDA_MAX:g}")


def inner_residual(z, r, s, lam):
    """Relative residual of the active-state polynomial, scaled by z^-lam."""
    z = np.asarray(z, dtype=float)
    zl = np.exp(-lam * np.log(z))
    terms = ((1.0 + s) * z, r, r * s * zl)
    return np.abs(terms[0] - terms[1] - terms[2]) / (terms[0] + terms[1] + terms[2])


def _quadratic_root(r, s):
    # lam = 1: (1+s) z^2 - r z - r s = 0, positive root
    return (r + np.sqrt(r * r + 4.0 * r * s * (1.0 + s))) / (2.0 * (1.0 + s))


def inner_solve_many(r: np.ndarray, s: float, lam: float, tol: float = TOL_INNER) -> np.ndarray:
    """z_i(s) for every ratio in ``r``; all r_i must exceed one."""
    r = np.asarray(r, dtype=float)
    if np.any(~(r > 1.0)):
        raise DomainError("inner solve needs every ratio r_i > 1")
    if s < 0 or not math.isfinite(s):
        raise DomainError(f"s must be a finite nonnegative number, got {s!r}")
    if s == 0.0:
        return r.copy()
    if lam == 1.0:
        z = _quadratic_root(r, s)
    else:
        lo = np.exp(np.log(r) / (lam + 1.0))
        # equation divided through by r z^lam: ((1+s)/r) z - 1 - s z^-lam = 0
        z, _ = _kernels.statewise_roots((1.0 + s) / r, s, lam, lo, r)
    res = inner_residual(z, r, s, lam)
    if np.any(res > tol):
        raise ConvergenceFailure(f"inner residual {res.max():.3e} above tolerance {tol:.1e}")
    return z


def inner_solve(r: float, s: float, lam: float, tol: float = TOL_INNER) -> float:
    """Unique root in (1, r] of (1+s) z^(lam+1) - r z^lam - r s = 0."""
    if not r > 1.0:
        raise DomainError(f"inner solve needs r > 1, got {r!r}")
    if not lam > 0:
        raise DomainError(f"lambda must be positive, got {lam!r}")
    return float(inner_solve_many(np.array([r]), s, lam, tol)[0])


@dataclass(frozen=True)
class CalibrationState:
    s: float
    z: np.ndarray
    B: float
    c: float
    R: float
    log_R: float


def eval_state(sel: PrefixSelection, lam: float, s: float, tol: float = TOL_INNER) -> CalibrationState:
    z = inner_solve_many(sel.r, s, lam, tol)
    B = 1.0 + math.fsum(sel.q * (z - 1.0))
    # log space: B^lam and z^-lam leave the float range for large lam
    logs = np.concatenate(([math.log(sel.tail_p)], np.log(sel.p) - lam * np.log(z)))
    top = logs.max()
    log_bracket = top + math.log(math.fsum(np.exp(logs - top)))
    log_R = lam * math.log(B) + log_bracket
    return CalibrationState(s=float(s), z=z, B=B, c=1.0 / B, R=math.exp(log_R), log_R=log_R)


def limit_risk(sel: PrefixSelection, lam: float) -> float:
    """lim R(s) as s -> infinity, tau* C^(lam+1)."""
    C = sel.tail_q + math.fsum(sel.q * np.exp(np.log(sel.r) / (lam + 1.0)))
    return sel.tau_star * C ** (lam + 1.0)


@dataclass(frozen=True)
class CalibrationResult:
    binding: bool
    s_star: float
    eta_star: float
    nu_star: float
    allocation: Allocation
    lam: float
    R0: float
    selection: Optional[PrefixSelection] = None
    z_star: np.ndarray = field(default_factory=lambda: np.zeros(0))
    outer_iterations: int = 0
    all_cash: bool = False


def _reconstruct(sel: PrefixSelection, sm: SortedMarket, lam: float, st: CalibrationState) -> Allocation:
    x_active = sel.q * st.c * (st.z - 1.0)
    x_sorted = np.zeros(sm.n)
    x_sorted[: sel.k_star] = x_active
    return make_allocation(sm.base, st.c, sm.to_original(x_sorted), gamma=1.0, lam=lam)


def calibrate(
    sel: PrefixSelection,
    sm: SortedMarket,
    lam: float,
    tol_inner: float = TOL_INNER,
    tol_outer: float = TOL_OUTER,
) -> CalibrationResult:
    """Solve the risk-constrained log problem on the prefix ``sel``."""
    if sm.regime is not Regime.OVERROUND:
        raise NotOverround(f"calibration needs an overround market, regime is {sm.regime.value}")
    _check_lambda(lam)
    st0 = eval_state(sel, lam, 0.0, tol_inner)
    if st0.R <= 1.0 + 1e-12:
        kelly = solve_kelly(sel, sm, lam)
        return CalibrationResult(
            binding=False,
            s_star=0.0,
            eta_star=0.0,
            nu_star=sel.tau_star / kelly.c,
            allocation=kelly,
            lam=lam,
            R0=st0.R,
            selection=sel,
            z_star=st0.z,
        )

    steps = 0
    lo, st_lo = 0.0, st0
    hi = 1.0
    st_hi = eval_state(sel, lam, hi, tol_inner)
    while st_hi.R >= 1.0:
        steps += 1
        if steps >= MAX_OUTER:
            raise ConvergenceFailure("could not bracket the root of R(s) = 1")
        lo, st_lo = hi, st_hi
        hi = max(1.0, 2.0 * hi)
        st_hi = eval_state(sel, lam, hi, tol_inner)

    # Illinois regula falsi on log R, which is decreasing in s
    f_lo, f_hi = st_lo.log_R, st_hi.log_R
    best = st_hi if abs(st_hi.R - 1.0) < abs(st_lo.R - 1.0) else st_lo
    side = 0
    while abs(best.R - 1.0) > tol_outer:
        steps += 1
        if steps >= MAX_OUTER:
            raise ConvergenceFailure(
                f"outer search stalled at |R-1|={abs(best.R - 1.0):.3e} after {steps} steps"
            )
        s = hi - f_hi * (hi - lo) / (f_hi - f_lo)
        if not lo < s < hi:
            s = 0.5 * (lo + hi)
        if hi - lo <= 4.0 * _kernels.EPS * hi:
            raise ConvergenceFailure(
                f"bracket collapsed at s={s!r} with |R-1|={abs(best.R - 1.0):.3e}"
            )
        st = eval_state(sel, lam, s, tol_inner)
        f = st.log_R
        if abs(st.R - 1.0) < abs(best.R - 1.0):
            best = st
        if f > 0:
            lo, f_lo = s, f
            if side == -1:
                f_hi *= 0.5
            side = -1
        elif f < 0:
            hi, f_hi = s, f
            if side == 1:
                f_lo *= 0.5
            side = 1
        else:
            break
    log.debug("calibrated lam=%g: s*=%.12g in %d outer steps", lam, best.s, steps)

    s_star, c = best.s, best.c
    return CalibrationResult(
        binding=True,
        s_star=s_star,
        eta_star=s_star * c**lam / lam,
        nu_star=sel.tau_star / c * (1.0 + s_star),
        allocation=_reconstruct(sel, sm, lam, best),
        lam=lam,
        R0=st0.R,
        selection=sel,
        z_star=best.z,
        outer_iterations=steps,
    )


def solve(sm: SortedMarket, lam: float, **tols) -> CalibrationResult:
    """Sort, select the prefix, test R(0), calibrate; all-cash when nothing beats its threshold."""
    try:
        sel = find_prefix(sm)
    except NoPrefix as exc:
        if not exc.all_cash:
            raise
        _check_lambda(lam)
        alloc = make_allocation(sm.base, 1.0, np.zeros(sm.n), gamma=1.0, lam=lam)
        return CalibrationResult(
            binding=False, s_star=0.0, eta_star=0.0, nu_star=1.0,
            allocation=alloc, lam=lam, R0=1.0, all_cash=True,
        )
    return calibrate(sel, sm, lam, **tols)


@dataclass(frozen=True)
class SweepEntry:
    lam: float
    result: Optional[CalibrationResult]
    error: Optional[KellyError] = None


def sweep(
    sel: PrefixSelection,
    sm: SortedMarket,
    lambda_grid: Sequence[float],
    workers: Optional[int] = None,
    **tols,
) -> list:
    """Calibrate at every lambda; failures are recorded per entry, not raised."""
    grid = [float(v) for v in lambda_grid]
    if not grid:
        raise ValueError("lambda grid is empty")

    def one(lam):
        try:
            return SweepEntry(lam, calibrate(sel, sm, lam, **tols))
        except KellyError as exc:
            return SweepEntry(lam, None, exc)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, grid))
    return [one(lam) for lam in grid]
