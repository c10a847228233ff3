import itertools
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from posted_market.core import CapExceeded, Caps, CostSchedule, Instance, MarketError
from posted_market.mechanisms import (
    expected_outcome, iter_runs, run_commitment, run_otf, verify_alg1, verify_commitment_guarantee,
    verify_guess_price_guarantee, verify_lemma8, verify_otf_guarantee, verify_subadditive_guarantee,
)
from posted_market.pricing import PricePlan, Supply, bayesian_otf_prices, opt_algorithm, summarize_benchmark
from posted_market.valuations import Additive

from conftest import min_card, small_instances
from test_pricing import C13, running_example, two_point


def plan(p, k):
    return PricePlan({0: Fraction(p)}, {0: Supply.fixed(k)})


def test_run_otf_examples():
    inst = running_example()
    out = run_otf(inst, inst.buyers(), plan(5, 2), [0, 1])
    assert (out.revenue, out.production_cost, out.profit, out.surplus, out.welfare) == (10, 4, 6, 6, 12)
    out = run_otf(inst, inst.buyers(), plan(11, 2))
    assert out.welfare == 0 and out.production_cost == 0
    out = run_otf(inst, inst.buyers(), plan(5, 1), [1, 0])
    assert out.allocation.bundles == (frozenset(), frozenset({0}))
    assert out.welfare == 6 - C13.marginal(1)


def test_run_commitment_examples():
    inst = running_example()
    out = run_commitment(inst, inst.buyers(), plan(4, 2))
    assert out.production_cost == 4 and out.welfare == 12
    assert run_commitment(inst, inst.buyers(), plan(12, 2)).welfare == -4
    assert run_commitment(inst, inst.buyers(), plan(1, 0)).welfare == 0


def test_run_rejects_bad_order():
    inst = running_example()
    with pytest.raises(MarketError):
        run_otf(inst, inst.buyers(), plan(5, 2), [0, 0])


def test_missing_good_is_unavailable():
    inst = Instance.full_information([CostSchedule((0,)), CostSchedule((0,))], [Additive.of({0: 3, 1: 9})])
    out = run_otf(inst, inst.buyers(), plan(1, 1))
    assert out.allocation.bundles == (frozenset({0}),)


def test_random_supply_is_seeded():
    inst = running_example()
    p = PricePlan({0: Fraction(5)}, {0: Supply(((0, Fraction(1, 2)), (2, Fraction(1, 2))))})
    outs = {run_otf(inst, inst.buyers(), p, seed=s).supply[0] for s in range(40)}
    assert outs == {0, 2}
    assert run_otf(inst, inst.buyers(), p, seed=9) == run_otf(inst, inst.buyers(), p, seed=9)


def test_expected_outcome_degenerate_and_two_point():
    inst = running_example()
    e = expected_outcome(inst, plan(5, 2))
    o = run_otf(inst, inst.buyers(), plan(5, 2))
    assert (e.revenue, e.production_cost, e.surplus, e.profit, e.welfare) == \
        (o.revenue, o.production_cost, o.surplus, o.profit, o.welfare)
    inst, alg = two_point()
    s = summarize_benchmark(inst, alg)
    e = expected_outcome(inst, bayesian_otf_prices(s), policy="worst")
    assert e.welfare >= s.expected_welfare / 2
    assert len(e.order_welfare) == 2


def test_expected_outcome_hand_computed():
    # supply 1 on the two-point example: one of the two buyers buys at 5
    inst, _ = two_point()
    e = expected_outcome(inst, plan(5, 1), policy="worst")
    # order (0, 1): high buyer 0 buys (welfare 9) or buyer 1 buys (welfare 5)
    assert dict(e.order_welfare)[(0, 1)] == Fraction(1, 2) * 9 + Fraction(1, 2) * 5
    assert dict(e.order_welfare)[(1, 0)] == 5
    assert e.welfare == 5 and e.worst_order == (1, 0)
    u = expected_outcome(inst, plan(5, 1), policy="uniform")
    assert u.welfare == (7 + 5) / Fraction(2)


def test_uniform_matches_fixed_on_symmetric_instance():
    v = Additive.of({0: 5})
    inst = Instance.full_information([CostSchedule((1, 2))], [v, v])
    p = plan(3, 1)
    assert expected_outcome(inst, p, policy="uniform").welfare == expected_outcome(inst, p).welfare


def test_expected_outcome_cap_needs_opt_in():
    inst, _ = two_point()
    with pytest.raises(CapExceeded):
        expected_outcome(inst, plan(5, 1), policy="worst", caps=Caps(joint=3))
    e = expected_outcome(inst, plan(5, 1), policy="worst", caps=Caps(joint=3), mc_samples=50, seed=2)
    assert e.estimated and e.runs == 100


def test_iter_runs_probabilities():
    inst, _ = two_point()
    p = PricePlan({0: Fraction(5)}, {0: Supply(((0, Fraction(1, 3)), (1, Fraction(2, 3))))})
    runs = list(iter_runs(inst, p, policy="worst"))
    assert len(runs) == 2 * 2 * 2
    assert sum(q for q, _ in runs) == 2


def test_verify_otf_examples():
    r = verify_otf_guarantee(running_example(), opt_algorithm)
    assert r.passed and r.data["expected_welfare"] == 12 and r.data["bound"] == 6
    empty = Instance.full_information([CostSchedule((0,))], [Additive.of({})])
    r = verify_otf_guarantee(empty, opt_algorithm)
    assert r.passed and r.data["expected_welfare"] == 0


def test_verify_commitment_examples():
    free = Instance.full_information([CostSchedule((0, 0))], [Additive.of({0: 10}), Additive.of({0: 6})])
    r = verify_commitment_guarantee(free, opt_algorithm)
    assert r.claimed and r.passed and r.data["factor"] == Fraction(1, 2)
    inst, alg = two_point()
    r = verify_commitment_guarantee(inst, alg)
    assert r.data["alpha"] == 4 and r.data["factor"] == Fraction(1, 3) and r.passed
    costly = Instance.full_information([CostSchedule((5,))], [Additive.of({0: 6})])
    r = verify_commitment_guarantee(costly, opt_algorithm)
    assert not r.claimed and r.passed and "no guarantee" in r.data["note"]


def test_verify_subadditive_examples():
    inst = Instance.full_information([CostSchedule.limited_supply(1)] * 4, [min_card(4)])
    r = verify_subadditive_guarantee(inst, opt_algorithm)
    assert r.claimed and r.passed
    assert r.data["expected_welfare"] > 4 * r.data["bound"]
    zero = Instance.full_information([CostSchedule.limited_supply(1)] * 2, [Additive.of({})])
    r = verify_subadditive_guarantee(zero, opt_algorithm)
    assert r.passed and r.data["expected_welfare"] == 0
    general = Instance.full_information([CostSchedule((1, 2))] * 2, [Additive.of({0: 5})])
    assert not verify_subadditive_guarantee(general, opt_algorithm).claimed


def test_verify_guess_example():
    zero = CostSchedule((0, 0))
    inst = Instance.full_information([zero, zero], [Additive.of({0: 10}), Additive.of({0: 6})])
    r = verify_guess_price_guarantee(inst)
    assert r.passed
    assert r.data["realizations"] == 8 ** 2
    # 16 / (4 * 3 * 2)
    assert r.data["bound"] == Fraction(16, 24)


def test_verify_lemma8_and_alg1():
    assert verify_lemma8(min_card(4), range(4), 4).passed
    assert verify_alg1(running_example(), all_orders=True).passed


@given(small_instances(max_goods=2, max_buyers=3), st.integers(0, 5))
def test_outcome_accounting(inst, seed):
    s = summarize_benchmark(inst, opt_algorithm)
    p = bayesian_otf_prices(s)
    prof = inst.buyers()
    for order in itertools.permutations(range(inst.N)):
        o = run_otf(inst, prof, p, order, seed=seed)
        assert o.profit + o.surplus == o.welfare
        value = sum(v.value(b) for v, b in zip(prof, o.allocation.bundles))
        assert o.welfare == value - o.production_cost
        for i in p.goods:
            assert o.sold[i] <= o.supply[i]
        for v, b in zip(prof, o.allocation.bundles):
            assert v.value(b) - sum(p.prices[i] for i in b) >= 0
        # fixed supply within k*: every good's realized profit is non-negative
        for i in p.goods:
            if p.supply[i].is_fixed:
                assert o.profit_by_good[i] >= 0
        c = run_commitment(inst, prof, p, order, seed=seed)
        assert c.production_cost == run_commitment(inst, prof, p, seed=seed).production_cost
        assert run_otf(inst, prof, p, order, seed=seed) == o
