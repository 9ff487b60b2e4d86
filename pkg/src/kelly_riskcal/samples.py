"""Seeded random market generators for tests, acceptance runs and benchmarks."""

from __future__ import annotations

import numpy as np

from .crra import find_prefix
from .errors import NoPrefix, NonUniquePrefix
from .market import Market, Regime, sort_market, validate

SEVEN_P = (0.50, 0.30, 0.20)
SEVEN_Q = (0.45, 0.35, 0.30)


def seven_market() -> Market:
    return validate(SEVEN_P, SEVEN_Q)


def random_overround(rng: np.random.Generator, n: int, overround=(0.02, 0.25), spread: float = 0.4) -> Market:
    p = rng.dirichlet(np.ones(n))
    q = p * np.exp(spread * rng.standard_normal(n))
    q *= (1.0 + rng.uniform(*overround)) / q.sum()
    return validate(p, q)


def random_fair(rng: np.random.Generator, n: int) -> Market:
    p = rng.dirichlet(np.ones(n))
    q = rng.dirichlet(np.ones(n))
    # renormalize until the float sum is within the fair tolerance
    for _ in range(4):
        q = q / q.sum()
    return validate(p, q)


def unique_prefix_markets(rng: np.random.Generator, count: int, n_range=(2, 6), margin: float = 1e-4):
    """Overround markets with a unique prefix separated from both neighbours.

    ``margin`` is the relative gap demanded in L_k* > tau* >= L_k*+1, which
    keeps the funded stakes clear of the support threshold.
    """
    out = []
    while len(out) < count:
        n = int(rng.integers(n_range[0], n_range[1] + 1))
        m = random_overround(rng, n)
        sm = sort_market(m)
        if sm.regime is not Regime.OVERROUND:
            continue
        try:
            sel = find_prefix(sm)
        except (NoPrefix, NonUniquePrefix):
            continue
        k = sel.k_star
        if sel.L[-1] <= sel.tau_star * (1 + margin) or sm.L[k] * (1 + margin) > sel.tau_star:
            continue
        out.append(m)
    return out
