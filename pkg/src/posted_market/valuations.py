"""Buyer valuations with exact demand and XoS oracles, and finite product priors."""
from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Callable, Iterable, Iterator, Mapping, Sequence, Union

from .core import INF, CapExceeded, Caps, Ext, MarketError, as_ext, is_inf

def _tiebreak_key(value: Fraction, bundle: Iterable[int]):
    # larger value first, then larger bundle, then lexicographically smallest ids
    ids = tuple(sorted(bundle))
    return (-value, -len(ids), ids)


@dataclass(frozen=True)
class AdditiveClause:
    """a(T) = sum of per-good weights; goods without a weight count 0."""

    items: tuple[tuple[int, Fraction], ...]

    def __post_init__(self):
        merged: dict[int, Fraction] = {}
        for i, w in self.items:
            w = as_ext(w)
            if is_inf(w) or w < 0:
                raise MarketError(f"clause weight for good {i} must be a finite non-negative rational, got {w}")
            if int(i) in merged:
                raise MarketError(f"duplicate good {i} in clause")
            merged[int(i)] = w
        object.__setattr__(self, "items", tuple(sorted((i, w) for i, w in merged.items() if w != 0)))

    @classmethod
    def of(cls, weights: Mapping[int, object]) -> "AdditiveClause":
        return cls(tuple(weights.items()))

    @cached_property
    def weights(self) -> dict[int, Fraction]:
        return dict(self.items)

    def weight(self, good: int) -> Fraction:
        return self.weights.get(good, Fraction(0))

    def __call__(self, bundle: Iterable[int]) -> Fraction:
        w = self.weights
        return sum((w.get(i, Fraction(0)) for i in bundle), Fraction(0))


class _ClauseValuation:
    """Shared demand/eval machinery for valuations that are a max of additive clauses."""

    clauses: tuple[AdditiveClause, ...]

    def goods(self) -> frozenset[int]:
        return frozenset(i for a in self.clauses for i, _ in a.items)

    def value(self, bundle: Iterable[int]) -> Fraction:
        bundle = tuple(bundle)
        return max(a(bundle) for a in self.clauses)

    def demand(self, prices: Mapping[int, Ext], available: Iterable[int]) -> frozenset[int]:
        available = tuple(sorted(set(available)))
        for i in available:
            if i not in prices:
                raise MarketError(f"no price for available good {i}")
        best_u = Fraction(0)
        best = []  # full maximizing sets of each optimal clause: strict gains plus ties
        for a in self.clauses:
            u = Fraction(0)
            chosen = []
            for i in available:
                p = prices[i]
                if is_inf(p):
                    continue
                w = a.weight(i)
                if w >= p:
                    u += w - p
                    chosen.append(i)
            if u > best_u:
                best_u, best = u, [chosen]
            elif u == best_u:
                best.append(chosen)
        if not best:
            return frozenset()
        # every optimal clause's maximal set has value best_u + p(S)
        winner = min(best, key=lambda s: _tiebreak_key(best_u + sum((prices[i] for i in s), Fraction(0)), s))
        return frozenset(winner)

    def best_clause(self, bundle: Iterable[int]) -> AdditiveClause:
        bundle = tuple(bundle)
        best, best_v = self.clauses[0], self.clauses[0](bundle)
        for a in self.clauses[1:]:
            v = a(bundle)
            if v > best_v:
                best, best_v = a, v
        return best


@dataclass(frozen=True)
class Additive(_ClauseValuation):
    clause: AdditiveClause

    @classmethod
    def of(cls, weights: Mapping[int, object]) -> "Additive":
        return cls(AdditiveClause.of(weights))

    @property
    def clauses(self) -> tuple[AdditiveClause, ...]:
        return (self.clause,)


@dataclass(frozen=True)
class XoS(_ClauseValuation):
    clauses: tuple[AdditiveClause, ...]

    def __post_init__(self):
        clauses = tuple(self.clauses)
        if not clauses:
            raise MarketError("an XoS valuation needs at least one clause")
        object.__setattr__(self, "clauses", clauses)

    @classmethod
    def of(cls, *weights: Mapping[int, object]) -> "XoS":
        return cls(tuple(AdditiveClause.of(w) for w in weights))


@dataclass(frozen=True)
class Table:
    """Explicit set function over a declared universe of goods.

    ``values[mask]`` is the value of the subset whose bit ``b`` is set iff
    ``universe[b]`` is in it.  Demand queries never return goods outside the
    universe; evaluating a bundle that contains one is an error.
    """

    universe: tuple[int, ...]
    values: tuple[Fraction, ...]
    _pos: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        universe = tuple(int(i) for i in self.universe)
        if len(set(universe)) != len(universe):
            raise MarketError("duplicate goods in table universe")
        values = tuple(as_ext(x) for x in self.values)
        if len(values) != 1 << len(universe):
            raise MarketError(f"table over {len(universe)} goods needs {1 << len(universe)} values, got {len(values)}")
        if any(is_inf(x) or x < 0 for x in values):
            raise MarketError("table values must be finite and non-negative")
        object.__setattr__(self, "universe", universe)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "_pos", {g: b for b, g in enumerate(universe)})

    @classmethod
    def from_function(cls, universe: Sequence[int], f: Callable[[frozenset[int]], object]) -> "Table":
        universe = tuple(universe)
        vals = []
        for mask in range(1 << len(universe)):
            vals.append(f(frozenset(g for b, g in enumerate(universe) if mask >> b & 1)))
        return cls(universe, tuple(vals))

    @classmethod
    def from_mapping(cls, universe: Sequence[int], values: Mapping[frozenset, object]) -> "Table":
        return cls.from_function(universe, lambda s: values[frozenset(s)])

    def goods(self) -> frozenset[int]:
        return frozenset(self.universe)

    def mask(self, bundle: Iterable[int]) -> int:
        m = 0
        for i in bundle:
            try:
                m |= 1 << self._pos[i]
            except KeyError:
                raise MarketError(f"good {i} is not in the table universe {self.universe}") from None
        return m

    def subset(self, mask: int) -> frozenset[int]:
        return frozenset(g for b, g in enumerate(self.universe) if mask >> b & 1)

    def value(self, bundle: Iterable[int]) -> Fraction:
        return self.values[self.mask(bundle)]

    def demand(self, prices: Mapping[int, Ext], available: Iterable[int]) -> frozenset[int]:
        avail = set(available)
        for i in avail:
            if i not in prices:
                raise MarketError(f"no price for available good {i}")
        bits = [(b, prices[g]) for b, g in enumerate(self.universe) if g in avail and not is_inf(prices[g])]
        best_key, best_mask, best_u = None, 0, None
        for r in range(len(bits) + 1):
            for combo in itertools.combinations(bits, r):
                mask = 0
                pay = Fraction(0)
                for b, p in combo:
                    mask |= 1 << b
                    pay += p
                val = self.values[mask]
                u = val - pay
                if best_u is None or u > best_u:
                    best_u, best_mask, best_key = u, mask, None
                elif u == best_u:
                    if best_key is None:
                        best_key = _tiebreak_key(self.values[best_mask], self.subset(best_mask))
                    key = _tiebreak_key(val, self.subset(mask))
                    if key < best_key:
                        best_mask, best_key = mask, key
        return self.subset(best_mask)


Valuation = Union[Additive, XoS, Table]


def evaluate(v: Valuation, bundle: Iterable[int]) -> Fraction:
    return v.value(bundle)


def demand(v: Valuation, prices: Mapping[int, Ext], available: Iterable[int]) -> frozenset[int]:
    """A bundle maximizing v(S) - p(S) over S within ``available``.

    Ties go to the higher-valued bundle, then the larger one, then the
    lexicographically smallest sorted id tuple.
    """
    return v.demand(prices, available)


def xos_clause(v: Valuation, bundle: Iterable[int]) -> AdditiveClause:
    """The clause attaining v on ``bundle``; the lowest index wins ties."""
    if isinstance(v, Table):
        raise MarketError("the XoS oracle needs an additive or XoS valuation")
    return v.best_clause(bundle)


def brute_force_demand(v: Valuation, prices: Mapping[int, Ext], available: Iterable[int]) -> frozenset[int]:
    """Reference demand by enumerating every subset of ``available``; test oracle only."""
    available = sorted(set(available))
    best_key, best = None, frozenset()
    for r in range(len(available) + 1):
        for combo in itertools.combinations(available, r):
            if any(is_inf(prices[i]) for i in combo):
                continue
            val = v.value(combo)
            u = val - sum((prices[i] for i in combo), Fraction(0))
            key = (-u,) + _tiebreak_key(val, combo)
            if best_key is None or key < best_key:
                best_key, best = key, frozenset(combo)
    return best


@dataclass(frozen=True)
class Violation:
    kind: str
    sets: tuple[frozenset[int], ...]

    def __str__(self):
        return f"{self.kind}: " + ", ".join(str(sorted(s)) for s in self.sets)


def validate(v: Valuation, max_goods: int = 16) -> Violation | None:
    """First violation of normalization, monotonicity or subadditivity, or None.

    Clause valuations are valid by construction; tables are checked exhaustively.
    """
    if not isinstance(v, Table):
        return None
    n = len(v.universe)
    if n > max_goods:
        raise CapExceeded(f"exhaustive check over {n} goods exceeds {max_goods}")
    vals = v.values
    if vals[0] != 0:
        return Violation("normalization", (frozenset(),))
    full = (1 << n) - 1
    for s in range(1 << n):
        for b in range(n):
            if not s >> b & 1 and vals[s] > vals[s | 1 << b]:
                return Violation("monotonicity", (v.subset(s), v.subset(s | 1 << b)))
    for s in range(1, full + 1):
        for t in range(s, full + 1):
            if vals[s | t] > vals[s] + vals[t]:
                return Violation("subadditivity", (v.subset(s), v.subset(t)))
    return None


Profile = tuple  # tuple[Valuation, ...], one per buyer


@dataclass(frozen=True)
class ProfileDistribution:
    """Independent buyers, each with an explicit finite (probability, valuation) support."""

    buyers: tuple[tuple[tuple[Fraction, Valuation], ...], ...]

    def __post_init__(self):
        buyers = []
        for j, support in enumerate(self.buyers):
            support = tuple((as_ext(p), v) for p, v in support)
            if not support:
                raise MarketError(f"buyer {j} has an empty support")
            if any(is_inf(p) or p < 0 for p, _ in support):
                raise MarketError(f"buyer {j} has a negative probability")
            if sum(p for p, _ in support) != 1:
                raise MarketError(f"buyer {j} probabilities sum to {sum(p for p, _ in support)}, not 1")
            buyers.append(support)
        object.__setattr__(self, "buyers", tuple(buyers))

    @classmethod
    def point(cls, profile: Sequence[Valuation]) -> "ProfileDistribution":
        return cls(tuple(((Fraction(1), v),) for v in profile))

    @property
    def N(self) -> int:
        return len(self.buyers)

    def support_size(self) -> int:
        n = 1
        for s in self.buyers:
            n *= len(s)
        return n

    def enumerate_support(self, cap: int | None = None) -> Iterator[tuple[Fraction, Profile]]:
        cap = Caps.from_env().support if cap is None else cap
        if self.support_size() > cap:
            raise CapExceeded(f"support of {self.support_size()} profiles exceeds cap {cap}; sample instead")
        for combo in itertools.product(*self.buyers):
            prob = Fraction(1)
            for p, _ in combo:
                prob *= p
            yield prob, tuple(v for _, v in combo)

    def sample(self, seed: int | random.Random) -> Profile:
        rng = seed if isinstance(seed, random.Random) else random.Random(seed)
        out = []
        for support in self.buyers:
            u = Fraction(rng.getrandbits(53), 1 << 53)
            acc = Fraction(0)
            chosen = support[-1][1]
            for p, v in support:
                acc += p
                if u < acc:
                    chosen = v
                    break
            out.append(chosen)
        return tuple(out)


def enumerate_support(d: ProfileDistribution, cap: int | None = None) -> list[tuple[Fraction, Profile]]:
    return list(d.enumerate_support(cap))


def sample(d: ProfileDistribution, seed: int) -> Profile:
    return d.sample(seed)


__all__ = [
    "AdditiveClause", "Additive", "XoS", "Table", "Valuation", "ProfileDistribution",
    "evaluate", "demand", "xos_clause", "validate", "enumerate_support", "sample",
    "brute_force_demand", "Violation", "INF",
]
