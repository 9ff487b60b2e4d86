import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kelly_riskcal import errors
from kelly_riskcal.fairbench import fair_constrained_solve, fair_feasibility, fair_kelly, kelly_risk, wealth_map
from kelly_riskcal.market import risk_functional, sort_market, validate
from kelly_riskcal.oracle import audit_kkt, brute_force_solve
from kelly_riskcal.samples import random_fair

SIMPLE = sort_market(validate((0.6, 0.4), (0.5, 0.5)))


def test_kelly_examples():
    np.testing.assert_allclose(fair_kelly(SIMPLE), [1.2, 0.8])
    np.testing.assert_array_equal(fair_kelly(sort_market(validate((0.5, 0.3, 0.2), (0.5, 0.3, 0.2)))), 1.0)


def test_feasibility_examples():
    assert kelly_risk(SIMPLE, 1.0) == pytest.approx(1.0, abs=1e-15)
    assert kelly_risk(SIMPLE, 0.5) == pytest.approx(math.sqrt(0.3) + math.sqrt(0.2))
    assert fair_feasibility(SIMPLE, 0.5)
    assert kelly_risk(SIMPLE, 3.0) == pytest.approx(0.5**3 / 0.6**2 + 0.5**3 / 0.4**2)
    assert not fair_feasibility(SIMPLE, 3.0)


def test_requires_fair(seven_sorted):
    with pytest.raises(errors.NotFair):
        fair_kelly(seven_sorted)


def test_requires_lambda_above_one():
    with pytest.raises(errors.PreconditionViolated):
        fair_constrained_solve(SIMPLE, 0.5)


def test_symmetric_market_returns_kelly():
    sol = fair_constrained_solve(sort_market(validate((0.5, 0.5), (0.5, 0.5))), 3.0)
    assert sol.feasible_at_kelly and sol.eta == 0.0 and sol.nu == 1.0
    np.testing.assert_array_equal(sol.W, 1.0)


def test_constrained_simple():
    sol = fair_constrained_solve(SIMPLE, 3.0)
    assert max(abs(sol.budget_residual), abs(sol.risk_residual)) <= 1e-12
    np.testing.assert_allclose(sol.W, [1.1008501473, 0.8991498527], atol=1e-9)
    ref = brute_force_solve(SIMPLE.base, 1.0, 3.0)
    np.testing.assert_allclose(sol.W, ref.allocation.W, atol=1e-8)
    assert audit_kkt(SIMPLE.base, 1.0, 3.0, sol.to_allocation(SIMPLE, 3.0)).passed


def test_wealth_map_limits():
    L = np.array([1.5, 0.5])
    np.testing.assert_allclose(wealth_map(L, 0.0, 1.0, 2.0), L)
    W = wealth_map(L, 0.3, 1.2, 2.0)
    np.testing.assert_allclose(L * (1 / W + 0.3 * 2.0 * W**-3.0), 1.2, rtol=1e-13)


@settings(max_examples=30)
@given(st.integers(0, 2**31), st.integers(2, 6), st.floats(1.2, 8.0))
def test_constrained_random(seed, n, lam):
    sm = sort_market(random_fair(np.random.default_rng(seed), n))
    assert fair_feasibility(sm, 1.0)
    sol = fair_constrained_solve(sm, lam)
    a = sol.to_allocation(sm, lam)
    assert a.risk <= 1.0 + 1e-10
    assert a.budget_residual == pytest.approx(0.0, abs=1e-10)
    # wealth ordering follows the likelihood ratios
    order = np.argsort(-sm.base.L, kind="stable")
    assert np.all(np.diff(sol.W[order]) <= 1e-12)
    if not sol.feasible_at_kelly:
        assert risk_functional(sol.W, sm.base.p, lam) == pytest.approx(1.0, abs=1e-10)
