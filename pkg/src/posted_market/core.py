"""Goods, convex cost schedules, instances, allocations and welfare accounting.

All quantities are exact: values, prices and costs are :class:`fractions.Fraction`
and the one non-rational value is ``math.inf`` (an exhausted or unavailable
copy).  ``-math.inf`` only ever appears as the welfare of an infeasible
allocation.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import TYPE_CHECKING, Iterable, Sequence, Union

if TYPE_CHECKING:
    from .valuations import ProfileDistribution, Valuation

INF = math.inf

#: extended non-negative rational: a Fraction or +inf
Ext = Union[Fraction, float]


class MarketError(ValueError):
    """Malformed input to one of the market operations."""


class CapExceeded(MarketError):
    """An exhaustive enumeration would exceed its configured size cap."""


def as_ext(x) -> Ext:
    """Coerce ints, Fractions, rational strings and +/-inf into an exact value."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise MarketError(f"not a number: {x!r}")
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        if math.isinf(x):
            return x
        if math.isnan(x):
            raise MarketError("NaN is not a valid quantity")
        return Fraction(x)
    if isinstance(x, str):
        s = x.strip().lower()
        if s in ("inf", "+inf", "infinity"):
            return INF
        if s in ("-inf", "-infinity"):
            return -INF
        return Fraction(s)
    raise MarketError(f"not a number: {x!r}")


def is_inf(x) -> bool:
    return isinstance(x, float) and math.isinf(x)


def is_power_of_two(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


def ceil_log2(n: int) -> int:
    if n < 1:
        raise MarketError(f"log2 of {n}")
    return (n - 1).bit_length()


def log2_rational(n: int) -> Fraction:
    """log2(n), exact for powers of two, otherwise the nearest rational with denominator <= 1e12."""
    if n < 1:
        raise MarketError(f"log2 of {n}")
    if is_power_of_two(n):
        return Fraction(n.bit_length() - 1)
    return Fraction(math.log2(n)).limit_denominator(10**12)


def log2_lower(n: int) -> Fraction:
    """A rational lower bound on log2(n); exact for powers of two."""
    if is_power_of_two(n):
        return log2_rational(n)
    return log2_rational(n) - Fraction(1, 10**9)


def log2_upper(n: int) -> Fraction:
    """A rational upper bound on log2(n); exact for powers of two."""
    if is_power_of_two(n):
        return log2_rational(n)
    return log2_rational(n) + Fraction(1, 10**9)


#: rational upper bound on Euler's number, so thresholds divided by it stay sound
E_UPPER = Fraction("2.7182818285")


@dataclass(frozen=True)
class Caps:
    """Enumeration caps.  ``POSTED_MARKET_CAP`` overrides them from the environment.

    The variable holds either one integer (applied to ``support`` and ``joint``)
    or comma-separated ``key=value`` pairs, e.g. ``joint=5000000,opt_buyers=6``.
    """

    support: int = 10**6
    joint: int = 10**6
    opt_buyers: int = 5
    opt_goods: int = 5

    @classmethod
    def from_env(cls) -> "Caps":
        raw = os.environ.get("POSTED_MARKET_CAP", "").strip()
        if not raw:
            return cls()
        if raw.isdigit():
            n = int(raw)
            return cls(support=n, joint=n)
        kwargs = {}
        for part in raw.split(","):
            key, _, val = part.partition("=")
            key = key.strip()
            if key not in cls.__dataclass_fields__:
                raise MarketError(f"unknown cap {key!r} in POSTED_MARKET_CAP")
            kwargs[key] = int(val)
        return cls(**kwargs)


@dataclass(frozen=True)
class CostSchedule:
    """Non-decreasing marginal costs c(1), ..., c(n_max); c(n) = inf beyond n_max."""

    marginals: tuple[Ext, ...]
    _prefix: tuple[Ext, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ms = tuple(as_ext(c) for c in self.marginals)
        for c in ms:
            if c < 0:
                raise MarketError(f"negative marginal cost {c}")
        for a, b in zip(ms, ms[1:]):
            if a > b:
                raise MarketError(f"marginal costs must be non-decreasing: {a} > {b}")
        prefix = [Fraction(0)]
        for c in ms:
            prefix.append(prefix[-1] + c)
        object.__setattr__(self, "marginals", ms)
        object.__setattr__(self, "_prefix", tuple(prefix))

    @classmethod
    def limited_supply(cls, k: int) -> "CostSchedule":
        return cls((Fraction(0),) * k + (INF,))

    @property
    def n_max(self) -> int:
        return len(self.marginals)

    def marginal(self, n: int) -> Ext:
        """c(n) for n >= 1."""
        if n < 1:
            raise MarketError(f"marginal cost index must be >= 1, got {n}")
        return self.marginals[n - 1] if n <= len(self.marginals) else INF

    def total(self, t: int) -> Ext:
        """C(t) = c(1) + ... + c(t)."""
        if t < 0:
            raise MarketError(f"copy count must be >= 0, got {t}")
        return self._prefix[t] if t < len(self._prefix) else INF

    def capacity(self) -> int:
        """Number of copies that can be produced at finite cost."""
        return sum(1 for c in self.marginals if not is_inf(c))

    def interpolated(self, x: Fraction) -> Ext:
        """C at a fractional point, by linear interpolation between integers."""
        if x < 0:
            raise MarketError(f"negative argument {x}")
        lo = math.floor(x)
        frac = Fraction(x) - lo
        if frac == 0:
            return self.total(lo)
        return self.total(lo) + frac * self.marginal(lo + 1)


def aggregate_cost(schedule: CostSchedule, t: int) -> Ext:
    return schedule.total(t)


def gamma_convexity(schedule: CostSchedule, k_max: int) -> Ext:
    """Largest gamma with gamma * C(k) <= k * c(k) for every k in [3, k_max].

    A k with C(k) = 0 constrains nothing and contributes +inf to the minimum.
    """
    if k_max < 3:
        raise MarketError(f"gamma-convexity needs k_max >= 3, got {k_max}")
    best: Ext = INF
    for k in range(3, k_max + 1):
        ck, Ck = schedule.marginal(k), schedule.total(k)
        if is_inf(Ck):
            raise MarketError(f"schedule is not finite through k={k}")
        if Ck == 0:
            continue
        best = min(best, k * ck / Ck)
    return best


@dataclass(frozen=True)
class Good:
    id: int
    cost: CostSchedule


@dataclass(frozen=True)
class Allocation:
    """Per-buyer bundles S_1..S_N (buyer j at index j)."""

    bundles: tuple[frozenset[int], ...]

    def __post_init__(self):
        object.__setattr__(self, "bundles", tuple(frozenset(b) for b in self.bundles))

    @classmethod
    def empty(cls, n_buyers: int) -> "Allocation":
        return cls(tuple(frozenset() for _ in range(n_buyers)))

    def counts(self, n_goods: int) -> list[int]:
        """x_i: how many buyers hold good i."""
        x = [0] * n_goods
        for b in self.bundles:
            for i in b:
                if not 0 <= i < n_goods:
                    raise MarketError(f"unknown good id {i}")
                x[i] += 1
        return x

    def holders(self, good: int) -> list[int]:
        return [j for j, b in enumerate(self.bundles) if good in b]


@dataclass(frozen=True)
class Instance:
    """Goods with cost schedules plus a (possibly single-point) buyer prior."""

    goods: tuple[Good, ...]
    distribution: "ProfileDistribution"

    def __post_init__(self):
        goods = tuple(self.goods)
        for n, g in enumerate(goods):
            if g.id != n:
                raise MarketError(f"good ids must be 0..M-1 in order; position {n} has id {g.id}")
        object.__setattr__(self, "goods", goods)
        for j, support in enumerate(self.distribution.buyers):
            for _, v in support:
                bad = [i for i in v.goods() if not 0 <= i < len(goods)]
                if bad:
                    raise MarketError(f"buyer {j} valuation references unknown goods {bad}")

    @classmethod
    def full_information(cls, goods: Iterable[Good] | Sequence[CostSchedule],
                         buyers: Sequence["Valuation"]) -> "Instance":
        from .valuations import ProfileDistribution

        goods = [g if isinstance(g, Good) else Good(n, g) for n, g in enumerate(goods)]
        return cls(tuple(goods), ProfileDistribution.point(buyers))

    @property
    def M(self) -> int:
        return len(self.goods)

    @property
    def N(self) -> int:
        return len(self.distribution.buyers)

    @property
    def schedules(self) -> tuple[CostSchedule, ...]:
        return tuple(g.cost for g in self.goods)

    def is_full_information(self) -> bool:
        return all(len(s) == 1 for s in self.distribution.buyers)

    def buyers(self) -> tuple["Valuation", ...]:
        """The profile of a full-information instance."""
        if not self.is_full_information():
            raise MarketError("instance is Bayesian; no single buyer profile")
        return tuple(s[0][1] for s in self.distribution.buyers)

    def is_limited_supply(self) -> bool:
        return all(all(c == 0 or is_inf(c) for c in g.cost.marginals) for g in self.goods)


def production_cost(schedules: Sequence[CostSchedule], counts: Sequence[int]) -> Ext:
    return sum((s.total(x) for s, x in zip(schedules, counts)), Fraction(0))


def social_welfare(instance: Instance, profile: Sequence["Valuation"], alloc: Allocation) -> Ext:
    """sum_j v_j(S_j) - sum_i C_i(x_i); -inf if some x_i exceeds what can be produced."""
    if len(alloc.bundles) != len(profile):
        raise MarketError(f"allocation has {len(alloc.bundles)} bundles for {len(profile)} buyers")
    counts = alloc.counts(instance.M)
    cost = production_cost(instance.schedules, counts)
    if is_inf(cost):
        return -INF
    value = sum((v.value(b) for v, b in zip(profile, alloc.bundles)), Fraction(0))
    return value - cost


def mean(pairs: Iterable[tuple[Fraction, Ext]]) -> Ext:
    """Exact expectation of (probability, value) pairs."""
    return sum((p * x for p, x in pairs if p), Fraction(0))

