"""Sequential-arrival posted-price mechanisms, exact expectations and guarantee verifiers."""
from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Mapping, Sequence

from .allocation import audit_greedy_trace, brute_force_opt, xos_greedy_allocate
from .core import (
    E_UPPER, Allocation, CapExceeded, Caps, Ext, Instance, MarketError,
    is_inf, log2_rational, log2_upper, social_welfare,
)
from .pricing import (
    Algorithm, BenchmarkSummary, PricePlan, alpha_boundedness, bayesian_otf_prices,
    check_structural_conditions, commitment_prices, guarantee_factor, guess_benchmark,
    guess_price_params, guess_ranges, jensen_gap, subadditive_benchmark,
    subadditive_otf_prices, subadditive_price_reduce, summarize_benchmark,
)
from .valuations import Valuation

KINDS = ("otf", "commitment")
POLICIES = ("fixed", "uniform", "worst")


@dataclass(frozen=True)
class MechanismOutcome:
    """One simulated run of a posted-price mechanism."""

    kind: str
    order: tuple[int, ...]
    supply: Mapping[int, int]          # realized cap per offered good
    allocation: Allocation
    sold: tuple[int, ...]              # t_i per good
    revenue: Fraction
    production_cost: Ext
    surplus: Fraction
    profit: Ext
    welfare: Ext
    profit_by_good: tuple[Ext, ...]


def _check_order(order: Sequence[int] | None, n: int) -> tuple[int, ...]:
    order = tuple(range(n)) if order is None else tuple(order)
    if sorted(order) != list(range(n)):
        raise MarketError(f"order {list(order)} is not a permutation of 0..{n - 1}")
    return order


def _arrivals(profile, prices, caps, order, cache):
    sold = dict.fromkeys(caps, 0)
    bundles = [frozenset()] * len(profile)
    for j in order:
        avail = frozenset(i for i, k in caps.items() if sold[i] < k)
        v = profile[j]
        key = (id(v), avail)
        got = cache.get(key) if cache is not None else None
        if got is None:
            got = v.demand({i: prices[i] for i in avail}, avail)
            if cache is not None:
                cache[key] = got
        bundles[j] = got
        for i in got:
            sold[i] += 1
    return bundles, sold


def _outcome(kind, instance, profile, plan, caps, order, bundles, sold) -> MechanismOutcome:
    schedules = instance.schedules
    M = instance.M
    revenue = Fraction(0)
    cost: Ext = Fraction(0)
    per_good: list[Ext] = [Fraction(0)] * M
    counts = [0] * M
    for i in plan.goods:
        t = sold[i]
        counts[i] = t
        paid = plan.prices[i] * t if t else Fraction(0)
        c = schedules[i].total(t if kind == "otf" else caps[i])
        revenue += paid
        cost += c
        per_good[i] = paid - c
    surplus = Fraction(0)
    for v, b in zip(profile, bundles):
        if b:
            surplus += v.value(b) - sum((plan.prices[i] for i in b), Fraction(0))
    profit = revenue - cost
    return MechanismOutcome(
        kind=kind,
        order=tuple(order),
        supply=dict(caps),
        allocation=Allocation(tuple(bundles)),
        sold=tuple(counts),
        revenue=revenue,
        production_cost=cost,
        surplus=surplus,
        profit=profit,
        welfare=surplus + profit,
        profit_by_good=tuple(per_good),
    )


def _run(kind, instance, profile, plan, order, seed, supply, cache=None) -> MechanismOutcome:
    if kind not in KINDS:
        raise MarketError(f"unknown mechanism {kind!r}")
    if len(profile) != instance.N:
        raise MarketError(f"profile has {len(profile)} buyers, instance has {instance.N}")
    order = _check_order(order, instance.N)
    bad = [i for i in plan.goods if not 0 <= i < instance.M]
    if bad:
        raise MarketError(f"plan prices unknown goods {bad}")
    caps = dict(supply) if supply is not None else plan.draw_supply(seed)
    if set(caps) != set(plan.goods):
        raise MarketError("supply realization does not match plan goods")
    bundles, sold = _arrivals(profile, plan.prices, caps, order, cache)
    return _outcome(kind, instance, profile, plan, caps, order, bundles, sold)


def run_otf(instance: Instance, profile: Sequence[Valuation], plan: PricePlan, order: Sequence[int] | None = None,
            seed: int | None = 0, supply: Mapping[int, int] | None = None) -> MechanismOutcome:
    """Static prices with per-good caps; cost is paid only on copies actually sold.

    A random supply is drawn from ``seed`` before the first arrival unless
    ``supply`` fixes the realization.
    """
    return _run("otf", instance, profile, plan, order, seed, supply)


def run_commitment(instance: Instance, profile: Sequence[Valuation], plan: PricePlan,
                   order: Sequence[int] | None = None, seed: int | None = 0,
                   supply: Mapping[int, int] | None = None) -> MechanismOutcome:
    """Same arrivals as :func:`run_otf`, but the full committed supply is produced up front."""
    return _run("commitment", instance, profile, plan, order, seed, supply)


# --------------------------------------------------------------------------
# expectations


@dataclass(frozen=True)
class ExpectedOutcome:
    kind: str
    policy: str
    revenue: Fraction
    production_cost: Ext
    surplus: Fraction
    profit: Ext
    welfare: Ext
    order_welfare: tuple[tuple[tuple[int, ...], Ext], ...]   # expected welfare per evaluated order
    worst_order: tuple[int, ...] | None
    estimated: bool = False
    runs: int = 0


_FIELDS = ("revenue", "production_cost", "surplus", "profit", "welfare")


def _joint_draws(instance, plan, caps, n_orders, mc_samples, seed):
    d = instance.distribution
    supplies = plan.supply_realizations()
    size = d.support_size() * len(supplies) * n_orders
    if size <= caps.joint and d.support_size() <= caps.support:
        return [(p * q, prof, sup) for p, prof in d.enumerate_support(caps.support) for q, sup in supplies], False
    if not mc_samples:
        raise CapExceeded(f"joint enumeration of {size} runs exceeds cap {caps.joint}; pass a Monte Carlo sample count")
    rng = random.Random(seed)
    w = Fraction(1, mc_samples)
    return [(w, d.sample(rng), plan.draw_supply(rng)) for _ in range(mc_samples)], True


def _orders(policy, order, n):
    if policy not in POLICIES:
        raise MarketError(f"unknown arrival policy {policy!r}")
    if policy == "fixed":
        return [_check_order(order, n)]
    return list(itertools.permutations(range(n)))


def iter_runs(instance: Instance, plan: PricePlan, kind: str = "otf", policy: str = "worst",
              order: Sequence[int] | None = None, caps: Caps | None = None,
              mc_samples: int | None = None, seed: int = 0) -> Iterator[tuple[Fraction, MechanismOutcome]]:
    """Every (probability, outcome) over profiles, supply draws and the policy's orders.

    Probabilities are per order: they sum to one within each order.
    """
    caps = Caps.from_env() if caps is None else caps
    orders = _orders(policy, order, instance.N)
    draws, _ = _joint_draws(instance, plan, caps, len(orders), mc_samples, seed)
    for prob, profile, supply in draws:
        cache: dict = {}
        for o in orders:
            yield prob, _run(kind, instance, profile, plan, o, None, supply, cache)


def expected_outcome(instance: Instance, plan: PricePlan, kind: str = "otf", policy: str = "fixed",
                     order: Sequence[int] | None = None, caps: Caps | None = None,
                     mc_samples: int | None = None, seed: int = 0) -> ExpectedOutcome:
    """Expectation of every outcome field under an arrival policy.

    ``fixed`` uses one order, ``uniform`` averages all orders, and ``worst``
    reports the order that minimizes expected welfare.  Exact when the joint
    enumeration fits ``caps``; otherwise a seeded estimate if ``mc_samples`` is given.
    """
    caps = Caps.from_env() if caps is None else caps
    orders = _orders(policy, order, instance.N)
    draws, estimated = _joint_draws(instance, plan, caps, len(orders), mc_samples, seed)
    acc = {o: dict.fromkeys(_FIELDS, Fraction(0)) for o in orders}
    runs = 0
    for prob, profile, supply in draws:
        cache: dict = {}
        for o in orders:
            out = _run(kind, instance, profile, plan, o, None, supply, cache)
            runs += 1
            a = acc[o]
            for f in _FIELDS:
                a[f] += prob * getattr(out, f)
    per_order = tuple((o, acc[o]["welfare"]) for o in orders)
    if policy == "uniform":
        n = len(orders)
        final = {f: sum((acc[o][f] for o in orders), Fraction(0)) / n for f in _FIELDS}
        worst = None
    else:
        worst = min(orders, key=lambda o: acc[o]["welfare"])
        final = acc[worst]
    return ExpectedOutcome(kind, policy, worst_order=worst if policy == "worst" else None,
                           order_welfare=per_order, estimated=estimated, runs=runs, **final)


# --------------------------------------------------------------------------
# verification reports


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    lhs: object = None
    rhs: object = None
    asserted: bool = True
    detail: str = ""


@dataclass
class VerificationReport:
    name: str
    claimed: bool = True
    checks: list[Check] = field(default_factory=list)
    data: dict = field(default_factory=dict)

    def add(self, name, passed, lhs=None, rhs=None, asserted=True, detail="") -> bool:
        self.checks.append(Check(name, bool(passed), lhs, rhs, asserted and self.claimed, detail))
        return bool(passed)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if c.asserted)

    @property
    def failures(self) -> list[Check]:
        return [c for c in self.checks if c.asserted and not c.passed]


def _structural(report: VerificationReport, plan, summary, alpha) -> None:
    for r in check_structural_conditions(plan, summary, alpha):
        report.add(f"good {r.good}: non-negative sold-out profit", r.nonneg_profit, r.sold_out_profit, 0)
        report.add(f"good {r.good}: residual surplus", r.surplus_ok, r.residual_surplus, r.threshold)
        report.add(f"good {r.good}: sold-out profit", r.profit_ok, r.sold_out_profit, r.threshold)
        if not r.per_point_nonneg:
            report.add(f"good {r.good}: per-draw sold-out profit", False, r.per_point_profit, 0, asserted=False,
                       detail="negative for some supply draw; judged in expectation")


def _jensen(report: VerificationReport, summary: BenchmarkSummary) -> None:
    for i, ec, ce in jensen_gap(summary):
        report.add(f"good {i}: E[C(k)] >= C(E[k])", ec >= ce, ec, ce)


def _worst_case(report, instance, plan, kind, bound, caps, mc_samples, seed) -> ExpectedOutcome:
    exp = expected_outcome(instance, plan, kind, "worst", caps=caps, mc_samples=mc_samples, seed=seed)
    report.add("worst-order expected welfare", exp.welfare >= bound, exp.welfare, bound,
               detail="estimated" if exp.estimated else "exact")
    report.data["expected_welfare"] = exp.welfare
    report.data["bound"] = bound
    report.data["worst_order"] = exp.worst_order
    report.data["order_margins"] = [(list(o), w - bound) for o, w in exp.order_welfare]
    report.data["estimated"] = exp.estimated
    return exp


def verify_otf_guarantee(instance: Instance, alg: Algorithm, caps: Caps | None = None,
                         mc_samples: int | None = None, seed: int = 0) -> VerificationReport:
    """On-the-fly prices keep half the benchmark's expected welfare under every arrival order."""
    report = VerificationReport("otf")
    summary = summarize_benchmark(instance, alg, caps, mc_samples, seed)
    plan = bayesian_otf_prices(summary)
    _structural(report, plan, summary, Fraction(2))
    _jensen(report, summary)
    report.data["benchmark_welfare"] = summary.expected_welfare
    report.data["plan"] = plan
    _worst_case(report, instance, plan, "otf", summary.expected_welfare / 2, caps, mc_samples, seed)
    return report


def verify_commitment_guarantee(instance: Instance, alg: Algorithm, caps: Caps | None = None,
                                mc_samples: int | None = None, seed: int = 0) -> VerificationReport:
    """Commitment prices keep (alpha-2)/(2(alpha-1)) of the benchmark when alpha >= 2."""
    summary = summarize_benchmark(instance, alg, caps, mc_samples, seed)
    alpha = alpha_boundedness(summary)
    report = VerificationReport("commitment", claimed=is_inf(alpha) or alpha >= 2)
    if not report.claimed:
        report.data["note"] = "no guarantee claimed for alpha < 2"
    otf, plan = bayesian_otf_prices(summary), commitment_prices(summary)
    for i in plan.goods:
        # price comparison holds for every summary, claimed or not
        report.checks.append(Check(f"good {i}: commitment price <= otf price",
                                   plan.prices[i] <= otf.prices[i], plan.prices[i], otf.prices[i]))
    _jensen(report, summary)
    factor = guarantee_factor(alpha)
    report.data.update(alpha=alpha, factor=factor, benchmark_welfare=summary.expected_welfare, plan=plan)
    _worst_case(report, instance, plan, "commitment", factor * summary.expected_welfare, caps, mc_samples, seed)
    return report


def verify_subadditive_guarantee(instance: Instance, alg: Algorithm, M: int | None = None,
                                 caps: Caps | None = None) -> VerificationReport:
    """Reduced-bundle prices keep E[SW(Alg)] / (4 e log2 M) under limited supply."""
    M = instance.M if M is None else M
    limited = instance.is_limited_supply()
    report = VerificationReport("subadditive", claimed=limited)
    if not limited:
        report.data["note"] = "general cost schedules are experimental; no guarantee claimed"
    summary = subadditive_benchmark(instance, alg, M, caps)
    plan = subadditive_otf_prices(instance, alg, M, caps, summary=summary)
    bound = summary.expected_welfare / (4 * E_UPPER * log2_upper(M)) if M >= 2 else Fraction(0)
    report.data.update(benchmark_welfare=summary.expected_welfare, plan=plan, M=M)
    _worst_case(report, instance, plan, "otf", bound, caps, None, 0)
    return report


def verify_lemma8(v: Valuation, bundle, M: int) -> VerificationReport:
    """Audit one price reduction: the kept bundle stays valuable under any removal."""
    report = VerificationReport("lemma8")
    A = frozenset(bundle)
    price, B, steps = subadditive_price_reduce(v, A, M)
    report.data.update(price=price, kept=sorted(B), steps=len(steps))
    if not steps:
        report.add("zero-value bundle", v.value(A) == 0, v.value(A), 0)
        return report
    items = sorted(B)
    worst = None
    for r in range(len(items) + 1):
        for rest in itertools.combinations(items, r):
            lhs = v.value(rest)
            if lhs < price * len(rest) and worst is None:
                worst = (rest, lhs)
    report.add("every sub-bundle worth its price", worst is None, worst, price)
    lhs = 2 * E_UPPER * log2_rational(M) * price * len(B)
    report.add("value retained up to 2e log2 M", lhs >= v.value(A), lhs, v.value(A))
    halvings = len(steps) - 1
    report.add("halvings <= log2 M", 1 << halvings <= M, halvings, log2_rational(M))
    prev = v.value(A)
    decay = 1 - 1 / log2_rational(M)
    for s in steps:
        report.add(f"step {s.step}: value decay", s.kept_value >= prev * decay, s.kept_value, prev * decay)
        prev = s.kept_value
    return report


def verify_alg1(instance: Instance, caps: Caps | None = None, all_orders: bool = False) -> VerificationReport:
    """Greedy allocation: structural trace audit and half the optimum on each support profile."""
    caps = Caps.from_env() if caps is None else caps
    report = VerificationReport("alg1")
    ratios = []
    for n, (_, profile) in enumerate(instance.distribution.enumerate_support(caps.support)):
        alloc, trace = xos_greedy_allocate(instance, profile)
        sw = social_welfare(instance, profile, alloc)
        _, opt = brute_force_opt(instance, profile, caps)
        for msg in audit_greedy_trace(instance, trace):
            report.add(f"profile {n}: trace", False, detail=msg)
        report.add(f"profile {n}: greedy >= opt/2", sw * 2 >= opt, sw, opt / 2)
        ratios.append((n, None if opt == 0 else sw / opt))
        if all_orders:
            for o in itertools.permutations(range(instance.N)):
                a, _ = xos_greedy_allocate(instance, profile, o)
                w = social_welfare(instance, profile, a)
                report.add(f"profile {n} order {list(o)}: greedy >= opt/2", w * 2 >= opt, w, opt / 2, asserted=False)
    report.data["ratios"] = ratios
    return report


def guess_threshold(M: int, N: int) -> Fraction:
    """Denominator 4(2 + log2 M)(1 + log2 N) with logs rounded up, so the threshold only shrinks."""
    return 4 * (2 + log2_upper(M)) * (1 + log2_upper(N))


def verify_guess_price_guarantee(instance: Instance, caps: Caps | None = None) -> VerificationReport:
    """Guessed prices: exact expectation over every per-good exponent draw, worst order."""
    caps = Caps.from_env() if caps is None else caps
    if not instance.is_full_information():
        raise MarketError("guess prices are defined for full-information instances")
    profile = instance.buyers()
    M, N = instance.M, instance.N
    report = VerificationReport("guess")
    bench = guess_benchmark(instance, caps)
    if bench.sw_opt <= 0:
        raise MarketError("optimal welfare must be positive")
    top1, top2 = guess_ranges(M, N)
    pairs = [(a, b) for a in range(top1 + 1) for b in range(top2 + 1)]
    orders = list(itertools.permutations(range(N)))
    size = len(pairs) ** M * len(orders)
    if size > caps.joint:
        raise CapExceeded(f"{size} guess realizations exceed cap {caps.joint}")
    schedules = instance.schedules
    for i in bench.retained:
        report.add(f"good {i}: a correct guess price exists", bool(bench.correct_r2[i]),
                   bench.sold_out_profit[i], bench.sw_opt / (4 * M))
    prob = Fraction(1, len(pairs) ** M)
    acc = dict.fromkeys(orders, Fraction(0))
    profit_ok = quarter_ok = True
    for combo in itertools.product(pairs, repeat=M):
        r1 = [a for a, _ in combo]
        r2 = [b for _, b in combo]
        plan = guess_price_params(M, N, bench.sw_opt, schedules, r1, r2)
        correct = [i for i in bench.retained
                   if 1 << r1[i] == bench.counts[i] and r2[i] in bench.correct_r2[i]]
        need = sum((bench.good_welfare[i] for i in correct), Fraction(0)) / 4
        cache: dict = {}
        for o in orders:
            out = _run("otf", instance, profile, plan, o, None, {i: plan.supply[i].value for i in plan.goods}, cache)
            acc[o] += prob * out.welfare
            neg = [i for i, x in enumerate(out.profit_by_good) if x < 0]
            if neg and profit_ok:
                profit_ok = report.add("per-good profit >= 0", False, out.profit_by_good, 0,
                                       detail=f"r1={r1} r2={r2} order={list(o)} goods={neg}")
            if out.welfare < need and quarter_ok:
                quarter_ok = report.add("correct guesses keep a quarter of their welfare", False, out.welfare, need,
                                        detail=f"r1={r1} r2={r2} order={list(o)} correct={correct}")
    if profit_ok:
        report.add("per-good profit >= 0", True)
    if quarter_ok:
        report.add("correct guesses keep a quarter of their welfare", True)
    bound = bench.sw_opt / guess_threshold(M, N)
    worst = min(orders, key=lambda o: acc[o])
    report.add("worst-order expected welfare", acc[worst] >= bound, acc[worst], bound)
    report.data.update(expected_welfare=acc[worst], bound=bound, worst_order=worst, sw_opt=bench.sw_opt,
                       benchmark_welfare=bench.sw_opt, realizations=len(pairs) ** M,
                       order_margins=[(list(o), acc[o] - bound) for o in orders])
    return report
