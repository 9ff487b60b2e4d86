"""Statewise root kernel with a numba path and a pure-numpy path.

Every per-state equation in the package reduces to

    g(w) = t*w - 1 - a*w**(-lam) = 0,   t > 0, a >= 0, lam > 0.

Newton runs on the log form h(u) = u + log(t) - log1p(a*exp(-lam*u)) with
u = log(w).  h is increasing and concave with slope in [1, 1 + lam], so the
iteration started at a lower bracket end climbs monotonically and fast; in w
itself it crawls whenever the a*w**(-lam) term dominates.  The bracket is
kept only as a guard against round-off.

Set ``KELLY_RISKCAL_NUMBA=0`` to force the numpy path.  Both paths are always
importable so they can be compared directly.
"""

from __future__ import annotations

import os

import numpy as np

EPS = float(np.finfo(float).eps)
MAXITER = 200

_flag = os.environ.get("KELLY_RISKCAL_NUMBA", "1").strip().lower()
_want_numba = _flag not in ("0", "false", "no", "off")

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False


def statewise_roots_numpy(t, a, lam, lo, hi):
    """Vectorized safeguarded Newton in log w; returns (w, iterations)."""
    t = np.asarray(t, dtype=float)
    log_t = np.log(t)
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    ulo, uhi = np.log(lo), np.log(hi)
    u = ulo.copy()
    done = np.zeros(u.shape, dtype=bool)
    it = 0
    for it in range(1, MAXITER + 1):
        e = a * np.exp(-lam * u)
        h = u + log_t - np.log1p(e)
        exact = h == 0.0
        ulo = np.where(h < 0.0, u, ulo)
        uhi = np.where(h > 0.0, u, uhi)
        un = u - h / (1.0 + lam * e / (1.0 + e))
        outside = (un < ulo) | (un > uhi)
        un = np.where(outside, 0.5 * (ulo + uhi), un)
        tol = 2.0 * EPS * np.maximum(1.0, np.abs(u))
        small = np.abs(un - u) <= tol
        collapsed = (uhi - ulo) <= tol
        newly = ~done & (exact | small | collapsed)
        u = np.where(done | exact, u, un)
        done |= newly
        if done.all():
            break
    # exp(log w) may step one ulp outside the caller's bracket
    return np.clip(np.exp(u), lo, hi), it


if HAVE_NUMBA:

    @numba.njit(cache=True)
    def _root_one(log_t, a, lam, ulo, uhi):
        u = ulo
        for it in range(1, MAXITER + 1):
            e = a * np.exp(-lam * u)
            h = u + log_t - np.log1p(e)
            if h == 0.0:
                return u, it
            if h < 0.0:
                ulo = u
            else:
                uhi = u
            un = u - h / (1.0 + lam * e / (1.0 + e))
            if un < ulo or un > uhi:
                un = 0.5 * (ulo + uhi)
            tol = 2.0 * EPS * max(1.0, abs(u))
            if abs(un - u) <= tol or (uhi - ulo) <= tol:
                return un, it
            u = un
        return u, MAXITER

    @numba.njit(cache=True)
    def _roots_nb(t, a, lam, lo, hi):
        n = t.shape[0]
        out = np.empty(n)
        worst = 0
        for i in range(n):
            u, it = _root_one(np.log(t[i]), a, lam, np.log(lo[i]), np.log(hi[i]))
            out[i] = min(max(np.exp(u), lo[i]), hi[i])
            if it > worst:
                worst = it
        return out, worst

    def statewise_roots_numba(t, a, lam, lo, hi):
        t = np.ascontiguousarray(t, dtype=np.float64)
        shape = t.shape
        w, it = _roots_nb(
            t.ravel(),
            float(a),
            float(lam),
            np.ascontiguousarray(lo, dtype=np.float64).ravel(),
            np.ascontiguousarray(hi, dtype=np.float64).ravel(),
        )
        return w.reshape(shape), it

else:  # pragma: no cover
    statewise_roots_numba = None


if HAVE_NUMBA and _want_numba:
    BACKEND = "numba"
    statewise_roots = statewise_roots_numba
else:
    BACKEND = "numpy"
    statewise_roots = statewise_roots_numpy


def warmup() -> None:
    """Trigger JIT compilation so later timings exclude it."""
    one = np.ones(1)
    statewise_roots(one * 0.5, 1.0, 2.0, one, one * 4.0)
