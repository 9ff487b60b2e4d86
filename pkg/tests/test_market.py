import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kelly_riskcal import errors
from kelly_riskcal.market import (
    Regime,
    classify_regime,
    crra_utility,
    make_allocation,
    risk_functional,
    slater_witness,
    sort_market,
    validate,
)


def test_validate_seven(seven):
    assert seven.n == 3
    np.testing.assert_allclose(seven.L, [10 / 9, 6 / 7, 2 / 3])


@pytest.mark.parametrize(
    "p, q, exc",
    [
        ((0.5, 0.4), (0.5, 0.5), errors.ProbabilityMassError),
        ((1.0,), (1.0,), errors.TooFewOutcomes),
        ((0.5, 0.5), (0.5, 0.5, 0.1), errors.LengthMismatch),
        ((0.5, 0.5), (0.5, 0.0), errors.NonPositiveEntry),
        ((1.2, -0.2), (0.5, 0.5), errors.NonPositiveEntry),
        ((0.5, float("nan")), (0.5, 0.5), errors.NonPositiveEntry),
    ],
)
def test_validate_rejects(p, q, exc):
    with pytest.raises(exc):
        validate(p, q)


def test_validate_rescales_tiny_mass_defect():
    m = validate((0.5 + 1e-12, 0.5), (0.5, 0.5))
    assert math.fsum(m.p) == pytest.approx(1.0, abs=1e-15)


def test_symmetric_market_is_fair():
    sm = sort_market(validate((0.5, 0.5), (0.5, 0.5)))
    assert sm.regime is Regime.FAIR
    np.testing.assert_array_equal(sm.L, [1.0, 1.0])


def test_sort_seven(seven_sorted):
    sm = seven_sorted
    assert sm.regime is Regime.OVERROUND
    assert sm.Q[-1] == pytest.approx(1.10)
    np.testing.assert_array_equal(sm.perm, [0, 1, 2])
    assert sm.tau[0] == pytest.approx(0.5 / 0.55)


def test_sort_reorders():
    sm = sort_market(validate((0.1, 0.5, 0.4), (0.35, 0.4, 0.35)))
    np.testing.assert_allclose(sm.L, [1.25, 0.4 / 0.35, 0.1 / 0.35])
    np.testing.assert_array_equal(sm.perm, [1, 2, 0])
    v = sm.to_original(np.array([1.0, 2.0, 3.0]))
    np.testing.assert_array_equal(v, [3.0, 1.0, 2.0])


def test_classify_regime_boundaries():
    assert classify_regime(1.0 + 5e-13) is Regime.FAIR
    assert classify_regime(1.0 + 1e-9) is Regime.OVERROUND
    assert classify_regime(0.95) is Regime.SUBFAIR


def test_risk_functional_examples(seven):
    assert risk_functional(np.ones(4), np.full(4, 0.25), 3.7) == 1.0
    W = np.array([10 / 9, 0.5 / 0.55, 0.5 / 0.55])
    assert risk_functional(W, seven.p, 2.0) == pytest.approx(1.01, abs=1e-12)
    p = np.array([0.6, 0.4])
    assert risk_functional(p / 0.5, p, 1.0) == pytest.approx(1.0, abs=1e-15)


def test_risk_functional_rejects_nonpositive_wealth():
    with pytest.raises(errors.NonPositiveWealth):
        risk_functional(np.array([1.0, 0.0]), np.array([0.5, 0.5]), 2.0)


def test_crra_utility_log_and_power():
    W = np.array([0.5, 2.0])
    np.testing.assert_allclose(crra_utility(W, 1.0), np.log(W))
    np.testing.assert_allclose(crra_utility(W, 2.0), -1.0 / W)


def test_allocation_budget(seven):
    a = make_allocation(seven, 0.9, np.array([0.1, 0.0, 0.0]), lam=2.0)
    assert a.budget_residual == pytest.approx(0.0, abs=1e-15)
    assert a.support() == (0,)
    assert a.W[0] == pytest.approx(0.9 + 0.1 / 0.45)


def test_slater_witness(seven_sorted):
    w = slater_witness(seven_sorted, 2.0)
    assert w is not None and w.risk < 1.0
    no_edge = sort_market(validate((0.25,) * 4, (0.275,) * 4))
    assert slater_witness(no_edge, 2.0) is None


def test_slater_witness_documented_point():
    m = validate((0.9, 0.1), (0.5, 0.6))
    a = make_allocation(m, 0.95, np.array([0.05, 0.0]), lam=1.0)
    assert a.risk == pytest.approx(0.9 / (0.95 + 0.1) + 0.1 / 0.95)
    assert a.risk < 1.0
    assert slater_witness(sort_market(m), 1.0).risk < 1.0


positive = st.floats(0.01, 1.0)


@given(st.lists(st.tuples(positive, positive), min_size=2, max_size=8), st.floats(0.1, 10.0))
def test_sorted_market_invariants(pairs, lam):
    p = np.array([a for a, _ in pairs])
    q = np.array([b for _, b in pairs])
    sm = sort_market(validate(p / p.sum(), q))
    assert np.all(np.diff(sm.L) <= 0)
    assert sm.P[-1] == pytest.approx(1.0)
    np.testing.assert_allclose(sm.p, sm.base.p[sm.perm])
    finite = np.isfinite(sm.tau)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = sm.tail_p / sm.tail_q
    np.testing.assert_allclose(sm.tau[finite], ratio[finite], rtol=1e-12, atol=1e-15)
    # Jensen: all-cash risk is exactly one
    assert risk_functional(np.ones(sm.n), sm.base.p, lam) == pytest.approx(1.0)
