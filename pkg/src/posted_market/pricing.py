"""Static price rules and the checks that certify them.

Every rule starts from a benchmark allocation algorithm run on each profile
of the prior, summarized per good, and turns the summary into one price per
good plus a supply limit.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

from .allocation import brute_force_opt, xos_greedy_allocate
from .core import (
    INF, Allocation, CapExceeded, Caps, CostSchedule, Ext, Instance, MarketError,
    ceil_log2, is_inf, is_power_of_two, log2_rational, social_welfare,
)
from .valuations import Valuation, xos_clause

Algorithm = Callable[[Instance, Sequence[Valuation]], Allocation]


def opt_algorithm(instance: Instance, profile: Sequence[Valuation]) -> Allocation:
    return brute_force_opt(instance, profile)[0]


def greedy_algorithm(instance: Instance, profile: Sequence[Valuation]) -> Allocation:
    return xos_greedy_allocate(instance, profile)[0]


ALGORITHMS: dict[str, Algorithm] = {"opt": opt_algorithm, "greedy": greedy_algorithm}


# --------------------------------------------------------------------------
# plans


@dataclass(frozen=True)
class Supply:
    """A supply limit: fixed when the distribution has a single point."""

    dist: tuple[tuple[int, Fraction], ...]

    def __post_init__(self):
        merged: dict[int, Fraction] = {}
        for k, p in self.dist:
            k, p = int(k), Fraction(p)
            if k < 0 or p < 0:
                raise MarketError(f"invalid supply point ({k}, {p})")
            if p:
                merged[k] = merged.get(k, Fraction(0)) + p
        if sum(merged.values()) != 1:
            raise MarketError(f"supply probabilities sum to {sum(merged.values())}, not 1")
        object.__setattr__(self, "dist", tuple(sorted(merged.items())))

    @classmethod
    def fixed(cls, k: int) -> "Supply":
        return cls(((k, Fraction(1)),))

    @property
    def is_fixed(self) -> bool:
        return len(self.dist) == 1

    @property
    def value(self) -> int:
        if not self.is_fixed:
            raise MarketError("supply is random")
        return self.dist[0][0]

    def mean(self) -> Fraction:
        return sum((k * p for k, p in self.dist), Fraction(0))

    def draw(self, rng: random.Random) -> int:
        u = Fraction(rng.getrandbits(53), 1 << 53)
        acc = Fraction(0)
        for k, p in self.dist:
            acc += p
            if u < acc:
                return k
        return self.dist[-1][0]


@dataclass(frozen=True)
class PricePlan:
    """One price and one supply limit per offered good; other goods are not sold."""

    prices: Mapping[int, Fraction]
    supply: Mapping[int, Supply]
    provenance: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if set(self.prices) != set(self.supply):
            raise MarketError("plan prices and supplies cover different goods")
        for i, p in self.prices.items():
            if not is_inf(p) and p < 0:
                raise MarketError(f"negative price {p} on good {i}")

    @property
    def goods(self) -> list[int]:
        return sorted(self.prices)

    def price(self, good: int) -> Ext:
        return self.prices.get(good, INF)

    def supply_realizations(self) -> list[tuple[Fraction, dict[int, int]]]:
        """Every joint supply draw with its probability (goods drawn independently)."""
        out = [(Fraction(1), {})]
        for i in self.goods:
            out = [(q * p, {**caps, i: k}) for q, caps in out for k, p in self.supply[i].dist]
        return out

    def draw_supply(self, seed: int | random.Random | None) -> dict[int, int]:
        rng = seed if isinstance(seed, random.Random) else random.Random(seed)
        return {i: (self.supply[i].value if self.supply[i].is_fixed else self.supply[i].draw(rng))
                for i in self.goods}


# --------------------------------------------------------------------------
# benchmark summaries


@dataclass(frozen=True)
class GoodSummary:
    good: int
    value: Fraction            # V_i: expected clause value credited to the good
    expected_cost: Ext         # E[C_i(k_i(v))]
    count_dist: tuple[tuple[int, Fraction], ...]

    @property
    def expected_count(self) -> Fraction:
        return sum((k * p for k, p in self.count_dist), Fraction(0))

    @property
    def welfare(self) -> Ext:
        return self.value - self.expected_cost


@dataclass(frozen=True)
class BenchmarkSummary:
    goods: tuple[GoodSummary, ...]
    expected_welfare: Ext      # E[SW(Alg(v))]
    expected_value: Fraction   # E[sum_j v_j(A_j(v))]
    expected_cost: Ext         # E[sum_i C_i(k_i(v))]
    estimated: bool = False
    samples: int | None = None
    schedules: tuple[CostSchedule, ...] = ()

    def good(self, i: int) -> GoodSummary:
        return self.goods[i]

    @property
    def retained(self) -> list[int]:
        """Goods kept for pricing: non-negative welfare and sold with positive probability."""
        return [g.good for g in self.goods if g.welfare >= 0 and g.expected_count > 0]

    @property
    def dropped(self) -> list[int]:
        keep = set(self.retained)
        return [g.good for g in self.goods if g.good not in keep]


def _profiles(instance: Instance, caps: Caps | None, samples: int | None, seed: int):
    caps = Caps.from_env() if caps is None else caps
    d = instance.distribution
    if d.support_size() <= caps.support:
        return list(d.enumerate_support(caps.support)), False
    if not samples:
        raise CapExceeded(f"support of {d.support_size()} profiles exceeds cap {caps.support}; pass a sample count")
    rng = random.Random(seed)
    w = Fraction(1, samples)
    return [(w, d.sample(rng)) for _ in range(samples)], True


def summarize_benchmark(instance: Instance, alg: Algorithm, caps: Caps | None = None,
                        samples: int | None = None, seed: int = 0) -> BenchmarkSummary:
    """Expected per-good clause value, sold count and cost of ``alg`` over the prior."""
    profiles, estimated = _profiles(instance, caps, samples, seed)
    M = instance.M
    schedules = instance.schedules
    value = [Fraction(0)] * M
    cost: list[Ext] = [Fraction(0)] * M
    dists: list[dict[int, Fraction]] = [dict() for _ in range(M)]
    exp_value = Fraction(0)
    exp_welfare: Ext = Fraction(0)
    for prob, profile in profiles:
        alloc = alg(instance, profile)
        counts = alloc.counts(M)
        for j, (v, bundle) in enumerate(zip(profile, alloc.bundles)):
            if not bundle:
                continue
            clause = xos_clause(v, bundle)
            exp_value += prob * v.value(bundle)
            for i in bundle:
                value[i] += prob * clause.weight(i)
        for i in range(M):
            dists[i][counts[i]] = dists[i].get(counts[i], Fraction(0)) + prob
            cost[i] += prob * schedules[i].total(counts[i])
        exp_welfare += prob * social_welfare(instance, profile, alloc)
    goods = tuple(GoodSummary(i, value[i], cost[i], tuple(sorted(dists[i].items()))) for i in range(M))
    return BenchmarkSummary(
        goods=goods,
        expected_welfare=exp_welfare,
        expected_value=exp_value,
        expected_cost=sum(cost, Fraction(0)),
        estimated=estimated,
        samples=len(profiles) if estimated else None,
        schedules=schedules,
    )


# --------------------------------------------------------------------------
# single good


def surplus_at(values: Sequence[Fraction], p: Fraction) -> Fraction:
    return sum((Fraction(v) - p for v in values), Fraction(0))


def profit_at(schedule: CostSchedule, k: int, p: Fraction) -> Ext:
    return p * k - schedule.total(k)


def equivalence_price(values: Sequence, schedule: CostSchedule, k: int) -> Fraction:
    """Price at which the k buyers' surplus equals the seller's profit from k sales."""
    values = [Fraction(v) for v in values]
    if k < 1:
        raise MarketError(f"need k >= 1 copies, got {k}")
    if len(values) != k:
        raise MarketError(f"expected {k} values, got {len(values)}")
    if any(a < b for a, b in zip(values, values[1:])):
        raise MarketError("values must be sorted in non-increasing order")
    total = schedule.total(k)
    if is_inf(total):
        raise MarketError(f"C({k}) is infinite")
    if sum(values) < total:
        raise MarketError("allocation has negative welfare")
    return (sum(values) + total) / (2 * k)


# --------------------------------------------------------------------------
# Bayesian rules


def _supply_for(g: GoodSummary) -> Supply:
    k = g.expected_count
    if k.denominator == 1:
        return Supply.fixed(int(k))
    return Supply(g.count_dist)


def _check_retained(summary: BenchmarkSummary) -> list[int]:
    keep = summary.retained
    for i in keep:
        if summary.good(i).expected_count == 0:
            raise MarketError(f"good {i} retained with zero expected supply")
    return keep


def bayesian_otf_prices(summary: BenchmarkSummary) -> PricePlan:
    """Price (V_i + E[C_i(k_i)]) / (2 E[k_i]); supply E[k_i] or, if fractional, k_i's distribution."""
    keep = _check_retained(summary)
    prices, supply = {}, {}
    for i in keep:
        g = summary.good(i)
        k = g.expected_count
        prices[i] = (g.value + g.expected_cost) / (2 * k)
        supply[i] = _supply_for(g)
    return PricePlan(prices, supply, {"rule": "otf", "dropped": summary.dropped})


def commitment_prices(summary: BenchmarkSummary) -> PricePlan:
    """Price V_i / (2 E[k_i]) with the same supply rule as the on-the-fly plan."""
    keep = _check_retained(summary)
    prices, supply = {}, {}
    for i in keep:
        g = summary.good(i)
        prices[i] = g.value / (2 * g.expected_count)
        supply[i] = _supply_for(g)
    return PricePlan(prices, supply, {"rule": "commitment", "dropped": summary.dropped})


def alpha_boundedness(summary: BenchmarkSummary) -> Ext:
    """E[buyer value] / E[production cost] under the benchmark; +inf for zero cost."""
    if summary.expected_cost == 0:
        return INF
    if is_inf(summary.expected_cost):
        return Fraction(0)
    return summary.expected_value / summary.expected_cost


def guarantee_factor(alpha: Ext) -> Fraction:
    """Fraction (alpha-2) / (2(alpha-1)) of benchmark welfare a commitment plan keeps."""
    if is_inf(alpha):
        return Fraction(1, 2)
    if alpha < 2:
        return Fraction(0)
    return (alpha - 2) / (2 * (alpha - 1))


@dataclass(frozen=True)
class ConditionReport:
    good: int
    sold_out_profit: Ext           # E over supply draws of p*K - C(K)
    residual_surplus: Ext          # V - p * E[k_i]
    threshold: Ext                 # SW_i / alpha
    per_point_profit: tuple[tuple[int, Ext], ...]
    nonneg_profit: bool
    surplus_ok: bool
    profit_ok: bool

    @property
    def passed(self) -> bool:
        return self.nonneg_profit and self.surplus_ok and self.profit_ok

    @property
    def per_point_nonneg(self) -> bool:
        return all(x >= 0 for _, x in self.per_point_profit)


def check_structural_conditions(plan: PricePlan, summary: BenchmarkSummary, alpha: Ext,
                                schedules: Sequence[CostSchedule] | None = None) -> list[ConditionReport]:
    """Evaluate the three sufficient per-good conditions for a 1/alpha welfare guarantee.

    Random supplies are judged in expectation over the supply draw; the
    per-point profits are reported alongside.
    """
    schedules = summary.schedules if schedules is None else schedules
    summary_goods = {g.good for g in summary.goods}
    if not set(plan.goods) <= summary_goods or set(summary.retained) - set(plan.goods):
        raise MarketError(f"plan goods {plan.goods} do not match retained goods {summary.retained}")
    out = []
    for i in plan.goods:
        g = summary.good(i)
        p = plan.prices[i]
        sched = schedules[i]
        points = tuple((k, p * k - sched.total(k)) for k, _ in plan.supply[i].dist)
        sold_out = sum((q * (p * k - sched.total(k)) for k, q in plan.supply[i].dist), Fraction(0))
        residual = g.value - p * g.expected_count
        thr = g.welfare / alpha if not is_inf(alpha) else Fraction(0)
        out.append(ConditionReport(
            good=i,
            sold_out_profit=sold_out,
            residual_surplus=residual,
            threshold=thr,
            per_point_profit=points,
            nonneg_profit=sold_out >= 0,
            surplus_ok=residual >= thr,
            profit_ok=sold_out >= thr,
        ))
    return out


def jensen_gap(summary: BenchmarkSummary, schedules: Sequence[CostSchedule] | None = None) -> list[tuple[int, Ext, Ext]]:
    """Per good (i, E[C_i(k_i)], C_i(E[k_i])) with C interpolated at fractional points."""
    schedules = summary.schedules if schedules is None else schedules
    return [(g.good, g.expected_cost, schedules[g.good].interpolated(g.expected_count)) for g in summary.goods]


# --------------------------------------------------------------------------
# subadditive buyers


@dataclass(frozen=True)
class ReductionStep:
    step: int
    price: Fraction
    kept: frozenset[int]
    kept_value: Fraction


def subadditive_price_reduce(v: Valuation, bundle: Iterable[int], M: int):
    """Shrink ``bundle`` to a sub-bundle B and a uniform per-good price for it.

    Repeats: price every remaining good at value / (size * log2 M) and keep
    the demanded subset, stopping once the kept set is at least half the
    previous one.  Returns ``(price, B, steps)``.  Every subset of B left
    after removing any goods is still worth at least ``price`` per good.
    """
    if M < 2:
        raise MarketError(f"need M >= 2 goods, got {M}")
    prev = frozenset(bundle)
    if not prev or v.value(prev) == 0:
        return Fraction(0), frozenset(), []
    log_m = log2_rational(M)
    steps = []
    t = 0
    while True:
        t += 1
        price = v.value(prev) / (len(prev) * log_m)
        kept = v.demand({i: price for i in prev}, prev)
        steps.append(ReductionStep(t, price, kept, v.value(kept)))
        if 2 * len(kept) >= len(prev):
            return price, kept, steps
        prev = kept


@dataclass(frozen=True)
class SubadditiveSummary:
    goods: tuple[GoodSummary, ...]   # value field holds sum of per-buyer reduced prices
    expected_welfare: Ext            # E[SW(Alg(v))] before reduction
    estimated: bool = False


def subadditive_benchmark(instance: Instance, alg: Algorithm, M: int | None = None,
                          caps: Caps | None = None, samples: int | None = None, seed: int = 0) -> SubadditiveSummary:
    M = instance.M if M is None else M
    profiles, estimated = _profiles(instance, caps, samples, seed)
    n = instance.M
    schedules = instance.schedules
    credit = [Fraction(0)] * n
    cost: list[Ext] = [Fraction(0)] * n
    dists: list[dict[int, Fraction]] = [dict() for _ in range(n)]
    exp_welfare: Ext = Fraction(0)
    for prob, profile in profiles:
        alloc = alg(instance, profile)
        exp_welfare += prob * social_welfare(instance, profile, alloc)
        counts = [0] * n
        for v, bundle in zip(profile, alloc.bundles):
            if not bundle:
                continue
            price, kept, _ = subadditive_price_reduce(v, bundle, M)
            for i in kept:
                credit[i] += prob * price
                counts[i] += 1
        for i in range(n):
            dists[i][counts[i]] = dists[i].get(counts[i], Fraction(0)) + prob
            cost[i] += prob * schedules[i].total(counts[i])
    goods = tuple(GoodSummary(i, credit[i], cost[i], tuple(sorted(dists[i].items()))) for i in range(n))
    return SubadditiveSummary(goods, exp_welfare, estimated)


def subadditive_otf_prices(instance: Instance, alg: Algorithm, M: int | None = None,
                           caps: Caps | None = None, summary: SubadditiveSummary | None = None) -> PricePlan:
    """Price SW_i / (2 E[k_i]) from the reduced allocations, under the native supply limits."""
    summary = subadditive_benchmark(instance, alg, M, caps) if summary is None else summary
    prices, supply = {}, {}
    for g in summary.goods:
        k = g.expected_count
        if k == 0:
            continue
        prices[g.good] = g.value / (2 * k)
        supply[g.good] = Supply.fixed(instance.goods[g.good].cost.capacity())
    return PricePlan(prices, supply, {"rule": "subadditive", "limited_supply": instance.is_limited_supply()})


# --------------------------------------------------------------------------
# guess prices (no distributional knowledge)


def guess_ranges(M: int, N: int) -> tuple[int, int]:
    """Largest r1 and r2: r1 in [0, ceil log2 N], r2 in [0, 2 + ceil log2 M]."""
    return ceil_log2(N), 2 + ceil_log2(M)


def guess_price(schedule: CostSchedule, M: int, sw_opt: Fraction, r1: int, r2: int) -> tuple[int, Fraction]:
    k = 1 << r1
    total = schedule.total(k)
    if is_inf(total):
        raise MarketError(f"C({k}) is infinite; cannot guess supply {k}")
    return k, total / k + Fraction(sw_opt) * (1 << r2) / (4 * M * k)


def guess_price_params(M: int, N: int, sw_opt: Fraction, schedules: Sequence[CostSchedule],
                       r1: int | Sequence[int], r2: int | Sequence[int]) -> PricePlan:
    """Guess-price plan for given exponents (one pair for all goods, or one per good)."""
    if M < 1 or N < 1:
        raise MarketError("need at least one good and one buyer")
    if sw_opt <= 0:
        raise MarketError(f"optimal welfare must be positive, got {sw_opt}")
    r1s = [r1] * len(schedules) if isinstance(r1, int) else list(r1)
    r2s = [r2] * len(schedules) if isinstance(r2, int) else list(r2)
    if len(r1s) != len(schedules) or len(r2s) != len(schedules):
        raise MarketError("need one exponent pair per good")
    top1, top2 = guess_ranges(M, N)
    prices, supply = {}, {}
    for i, (s, a, b) in enumerate(zip(schedules, r1s, r2s)):
        if not 0 <= a <= top1:
            raise MarketError(f"r1={a} outside [0, {top1}]")
        if not 0 <= b <= top2:
            raise MarketError(f"r2={b} outside [0, {top2}]")
        k, p = guess_price(s, M, sw_opt, a, b)
        prices[i] = p
        supply[i] = Supply.fixed(k)
    return PricePlan(prices, supply, {"rule": "guess", "r1": r1s, "r2": r2s,
                                      "exact_logs": is_power_of_two(M) and is_power_of_two(N)})


def draw_guess_exponents(M: int, N: int, n_goods: int, seed: int) -> tuple[list[int], list[int]]:
    rng = random.Random(seed)
    top1, top2 = guess_ranges(M, N)
    r1 = [rng.randint(0, top1) for _ in range(n_goods)]
    r2 = [rng.randint(0, top2) for _ in range(n_goods)]
    return r1, r2


@dataclass(frozen=True)
class GuessBenchmark:
    """Full-information benchmark against which guessed prices are judged."""

    sw_opt: Fraction
    sw_pow2: Fraction
    allocation: Allocation
    counts: tuple[int, ...]
    prices: tuple[Ext, ...]
    sold_out_profit: tuple[Ext, ...]   # pi*_i = p_i k_i - C_i(k_i)
    good_welfare: tuple[Ext, ...]      # SW*_i
    retained: tuple[int, ...]
    correct_r2: Mapping[int, tuple[int, ...]]   # every r2 whose margin lands in [pi*/2, pi*]


def guess_benchmark(instance: Instance, caps: Caps | None = None) -> GuessBenchmark:
    """Optimum restricted to power-of-two counts, priced by the on-the-fly rule, low-profit goods discarded."""
    profile = instance.buyers()
    M, N = instance.M, instance.N
    _, sw_opt = brute_force_opt(instance, profile, caps)
    alloc, sw_pow2 = brute_force_opt(instance, profile, caps, allowed_count=is_power_of_two)
    counts = alloc.counts(M)
    summary = summarize_benchmark(
        instance, lambda inst, prof: alloc, caps)
    plan = bayesian_otf_prices(summary)
    schedules = instance.schedules
    prices, profits, welfare = [], [], []
    for i in range(M):
        g = summary.good(i)
        welfare.append(g.welfare)
        if i in plan.prices:
            p = plan.prices[i]
            prices.append(p)
            profits.append(p * counts[i] - schedules[i].total(counts[i]))
        else:
            prices.append(INF)
            profits.append(Fraction(0))
    threshold = Fraction(sw_opt) / (4 * M) if sw_opt > 0 else Fraction(0)
    retained = tuple(i for i in plan.goods if profits[i] >= threshold and counts[i] >= 1)
    _, top2 = guess_ranges(M, N)
    correct = {}
    for i in retained:
        # margin p k - C(k) of the guess at the true count k
        margins = [(r2, Fraction(sw_opt) * (1 << r2) / (4 * M)) for r2 in range(top2 + 1)]
        correct[i] = tuple(r2 for r2, g in margins if profits[i] / 2 <= g <= profits[i])
    return GuessBenchmark(Fraction(sw_opt), Fraction(sw_pow2), alloc, tuple(counts), tuple(prices),
                          tuple(profits), tuple(welfare), retained, correct)
