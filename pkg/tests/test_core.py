from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from posted_market.core import (
    INF, Allocation, CapExceeded, Caps, CostSchedule, Instance, MarketError, aggregate_cost,
    as_ext, ceil_log2, gamma_convexity, log2_lower, log2_rational, log2_upper, social_welfare,
)
from posted_market.valuations import Additive

from conftest import finite_schedules, schedules


def test_aggregate_cost_examples():
    assert aggregate_cost(CostSchedule((1, 3)), 2) == 4
    assert aggregate_cost(CostSchedule((0, 0, INF)), 2) == 0
    assert aggregate_cost(CostSchedule((5, 7)), 0) == 0


def test_aggregate_cost_beyond_schedule_is_infinite():
    s = CostSchedule((1, 3))
    assert s.marginal(3) == INF
    assert aggregate_cost(s, 3) == INF
    assert aggregate_cost(CostSchedule((0, INF)), 2) == INF


def test_schedule_rejects_decreasing_and_negative():
    with pytest.raises(MarketError):
        CostSchedule((3, 1))
    with pytest.raises(MarketError):
        CostSchedule((-1, 2))
    with pytest.raises(MarketError):
        CostSchedule((1,)).total(-1)


def test_limited_supply_encoding():
    s = CostSchedule.limited_supply(2)
    assert s.marginals == (0, 0, INF)
    assert s.capacity() == 2


def _two_buyers(costs, a=10, b=6):
    return Instance.full_information([CostSchedule(costs)], [Additive.of({0: a}), Additive.of({0: b})])


def test_social_welfare_examples():
    inst = _two_buyers((1, 3))
    both = Allocation((frozenset({0}), frozenset({0})))
    assert social_welfare(inst, inst.buyers(), both) == 16 - 4
    assert social_welfare(inst, inst.buyers(), Allocation.empty(2)) == 0
    unit = _two_buyers((0, INF))
    assert social_welfare(unit, unit.buyers(), both) == -INF


def test_social_welfare_unknown_good():
    inst = _two_buyers((1, 3))
    with pytest.raises(MarketError):
        social_welfare(inst, inst.buyers(), Allocation((frozenset({5}), frozenset())))


def test_gamma_convexity_examples():
    linear = CostSchedule((1, 2, 3, 4))
    # k=3: 3*3/6, k=4: 4*4/10
    assert gamma_convexity(linear, 4) == min(Fraction(9, 6), Fraction(16, 10)) == Fraction(3, 2)
    assert gamma_convexity(CostSchedule((1, 1, 1)), 3) == 1
    assert gamma_convexity(CostSchedule((1, 4, 9)), 3) == Fraction(27, 14)


def test_gamma_convexity_errors_and_vacuous():
    with pytest.raises(MarketError):
        gamma_convexity(CostSchedule((1, 2, 3)), 2)
    with pytest.raises(MarketError):
        gamma_convexity(CostSchedule((1, 2)), 3)
    assert gamma_convexity(CostSchedule((0, 0, 0)), 3) == INF


def test_as_ext_and_logs():
    assert as_ext("3/4") == Fraction(3, 4)
    assert as_ext("inf") == INF
    with pytest.raises(MarketError):
        as_ext(float("nan"))
    assert log2_rational(8) == 3
    assert ceil_log2(5) == 3 and ceil_log2(1) == 0
    assert log2_lower(3) < Fraction(1.5849625007211563) < log2_upper(3)


def test_caps_from_env(monkeypatch):
    monkeypatch.setenv("POSTED_MARKET_CAP", "77")
    assert Caps.from_env() == Caps(support=77, joint=77)
    monkeypatch.setenv("POSTED_MARKET_CAP", "joint=5, opt_buyers=6")
    assert Caps.from_env().opt_buyers == 6 and Caps.from_env().joint == 5
    monkeypatch.setenv("POSTED_MARKET_CAP", "bogus=1")
    with pytest.raises(MarketError):
        Caps.from_env()
    assert issubclass(CapExceeded, MarketError)


@given(finite_schedules(6), st.integers(0, 3), st.integers(0, 3))
def test_aggregate_cost_superadditive(s, a, b):
    assert s.total(a + b) >= s.total(a) + s.total(b)


@given(finite_schedules(6), st.integers(1, 6), st.integers(1, 6))
def test_average_cost_non_decreasing(s, t, u):
    t, u = min(t, u), max(t, u)
    assert s.total(t) * u <= s.total(u) * t


@given(schedules(), st.lists(st.tuples(st.integers(0, 5), st.integers(1, 5)), min_size=1, max_size=4))
def test_jensen_with_interpolation(s, pts):
    pts = [(k, w) for k, w in pts if k <= s.capacity()] or [(0, 1)]
    total = sum(w for _, w in pts)
    ek = sum(Fraction(k * w, total) for k, w in pts)
    ec = sum(Fraction(w, total) * s.total(k) for k, w in pts)
    assert ec >= s.interpolated(ek)


@given(st.permutations([0, 1, 2]))
def test_welfare_invariant_under_buyer_permutation(perm):
    vals = [Additive.of({0: 5, 1: 2}), Additive.of({0: 3}), Additive.of({1: 7})]
    bundles = [frozenset({0}), frozenset({0}), frozenset({1})]
    costs = [CostSchedule((1, 2, 3)), CostSchedule((0, 4))]
    base = Instance.full_information(costs, vals)
    w = social_welfare(base, vals, Allocation(tuple(bundles)))
    pv = [vals[p] for p in perm]
    pb = [bundles[p] for p in perm]
    perm_inst = Instance.full_information(costs, pv)
    assert social_welfare(perm_inst, pv, Allocation(tuple(pb))) == w
