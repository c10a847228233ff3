"""Welfare-maximizing allocation: the XoS greedy 2-approximation and an exact optimum.

The greedy algorithm treats the seller as an extra holder of every good who
always offers the next copy at its marginal cost.  Arriving buyers purchase a
demanded bundle at the current cheapest asks, possibly taking copies away
from earlier buyers, and then re-offer each good at its weight in their
maximizing clause.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Sequence

from .core import INF, Allocation, CapExceeded, Caps, Ext, Instance, MarketError, is_inf, social_welfare
from .valuations import Table, Valuation, xos_clause

#: holder id of the seller in greedy state and traces
SELLER = -1


@dataclass(frozen=True)
class RoundRecord:
    """State of the greedy algorithm around one buyer's round."""

    round: int
    buyer: int
    prices_before: tuple[Ext, ...]
    demanded: frozenset[int]
    purchased: bool
    prices_after: tuple[Ext, ...]
    holders_after: tuple[tuple[int, ...], ...]
    asks_after: tuple[tuple[tuple[int, Fraction], ...], ...]
    bundles_after: tuple[frozenset[int], ...]

    def to_dict(self) -> dict:
        from .serialize import ext_to_json

        return {
            "round": self.round,
            "buyer": self.buyer,
            "prices_before": [ext_to_json(p) for p in self.prices_before],
            "demanded": sorted(self.demanded),
            "purchased": self.purchased,
            "prices_after": [ext_to_json(p) for p in self.prices_after],
            "holders_after": [list(h) for h in self.holders_after],
            "asks_after": [[[i, ext_to_json(q)] for i, q in a] for a in self.asks_after],
            "bundles_after": [sorted(b) for b in self.bundles_after],
        }


@dataclass
class GreedyState:
    """Mutable working state of one greedy run; holders include SELLER."""

    prices: list[Ext]
    holders: list[set[int]]
    asks: dict[tuple[int, int], Fraction]
    cheapest: list[int]
    bundles: list[set[int]]
    round: int = 0

    def seller_ask(self, schedules, good: int) -> Ext:
        # |X_j| counts the seller, so this is the marginal cost of the next copy
        return schedules[good].marginal(len(self.holders[good]))

    def refresh(self, schedules, good: int) -> None:
        best_q, best_h = self.seller_ask(schedules, good), SELLER
        for h in sorted(self.holders[good]):
            if h == SELLER:
                continue
            q = self.asks[h, good]
            if q < best_q:
                best_q, best_h = q, h
        self.prices[good], self.cheapest[good] = best_q, best_h


def _check_clause_profile(profile: Sequence[Valuation]) -> None:
    for j, v in enumerate(profile):
        if isinstance(v, Table):
            raise MarketError(f"buyer {j} is not XoS; the greedy algorithm needs XoS valuations")


def xos_greedy_allocate(instance: Instance, profile: Sequence[Valuation], order: Sequence[int] | None = None):
    """Run the greedy XoS allocation; returns ``(Allocation, list[RoundRecord])``."""
    _check_clause_profile(profile)
    N, M = len(profile), instance.M
    if N != instance.N:
        raise MarketError(f"profile has {N} buyers, instance has {instance.N}")
    order = list(range(N)) if order is None else list(order)
    if sorted(order) != list(range(N)):
        raise MarketError(f"order {order} is not a permutation of the buyers")
    schedules = instance.schedules
    state = GreedyState(
        prices=[s.marginal(1) for s in schedules],
        holders=[{SELLER} for _ in range(M)],
        asks={},
        cheapest=[SELLER] * M,
        bundles=[set() for _ in range(N)],
    )
    goods = range(M)
    trace = []
    for r, i in enumerate(order, start=1):
        state.round = r
        before = tuple(state.prices)
        wanted = profile[i].demand(dict(enumerate(state.prices)), goods)
        clause = xos_clause(profile[i], wanted)
        utility = clause(wanted) - sum((state.prices[j] for j in wanted), Fraction(0))
        # worthless zero-utility purchases change nothing but holder churn
        purchased = bool(wanted) and not (utility == 0 and all(clause.weight(j) == 0 for j in wanted))
        if purchased:
            state.bundles[i] = set(wanted)
            for j in sorted(wanted):
                y = state.cheapest[j]
                if y != SELLER:
                    state.bundles[y].discard(j)
                    state.holders[j].discard(y)
                    del state.asks[y, j]
                state.holders[j].add(i)
                state.asks[i, j] = clause.weight(j)
                state.refresh(schedules, j)
        trace.append(RoundRecord(
            round=r,
            buyer=i,
            prices_before=before,
            demanded=wanted,
            purchased=purchased,
            prices_after=tuple(state.prices),
            holders_after=tuple(tuple(sorted(h - {SELLER})) for h in state.holders),
            asks_after=tuple(tuple((h, state.asks[h, j]) for h in sorted(state.holders[j] - {SELLER}))
                             for j in goods),
            bundles_after=tuple(frozenset(b) for b in state.bundles),
        ))
    return Allocation(tuple(frozenset(b) for b in state.bundles)), trace


def audit_greedy_trace(instance: Instance, trace: Sequence[RoundRecord]) -> list[str]:
    """Check the greedy run's structural invariants; returns human-readable failures.

    Checked: prices never fall; a buyer's bundle only shrinks after her round;
    every price is at most each real holder's ask; every price is at most the
    marginal cost of one copy beyond the final count; final holders ask at
    least the marginal cost of the final copy.
    """
    failures = []
    if not trace:
        return failures
    schedules = instance.schedules
    M = instance.M
    final = trace[-1]
    final_counts = [len(h) for h in final.holders_after]
    prev_prices = None
    seen: set[int] = set()
    prev_bundles = None
    for rec in trace:
        if prev_prices is not None:
            for j in range(M):
                if rec.prices_before[j] != prev_prices[j]:
                    failures.append(f"round {rec.round}: price of good {j} changed between rounds")
        for j in range(M):
            if rec.prices_after[j] < rec.prices_before[j]:
                failures.append(f"P1 round {rec.round}: price of good {j} fell {rec.prices_before[j]} -> {rec.prices_after[j]}")
            for h, q in rec.asks_after[j]:
                if rec.prices_after[j] > q:
                    failures.append(f"P3 round {rec.round}: price {rec.prices_after[j]} of good {j} exceeds ask {q} of buyer {h}")
            cap = schedules[j].marginal(final_counts[j] + 1)
            for p in (rec.prices_before[j], rec.prices_after[j]):
                if p > cap:
                    failures.append(f"P4 round {rec.round}: price {p} of good {j} exceeds c({final_counts[j] + 1}) = {cap}")
        if prev_bundles is not None:
            for b in seen:
                if not rec.bundles_after[b] <= prev_bundles[b]:
                    failures.append(f"P2 round {rec.round}: bundle of buyer {b} grew after her round")
        seen.add(rec.buyer)
        prev_prices = rec.prices_after
        prev_bundles = rec.bundles_after
    for j in range(M):
        if final_counts[j] == 0:
            continue
        cj = schedules[j].marginal(final_counts[j])
        for h, q in final.asks_after[j]:
            if q < cj:
                failures.append(f"profitability: buyer {h} asks {q} < c({final_counts[j]}) = {cj} on good {j}")
    for j in range(M):
        holders = set(final.holders_after[j])
        owners = {b for b, bundle in enumerate(final.bundles_after) if j in bundle}
        if holders != owners:
            failures.append(f"holder set of good {j} {sorted(holders)} disagrees with bundles {sorted(owners)}")
    return failures


def _bundle_options(v: Valuation, M: int) -> list[tuple[int, Fraction]]:
    if isinstance(v, Table):
        goods = sorted(g for g in v.universe if 0 <= g < M)
    else:
        goods = list(range(M))
    out = []
    for r in range(len(goods) + 1):
        for combo in itertools.combinations(goods, r):
            mask = 0
            for g in combo:
                mask |= 1 << g
            out.append((mask, v.value(combo)))
    out.sort()
    return out


def _mask_to_set(mask: int) -> frozenset[int]:
    return frozenset(b for b in range(mask.bit_length()) if mask >> b & 1)


def brute_force_opt(instance: Instance, profile: Sequence[Valuation], caps: Caps | None = None,
                    allowed_count: Callable[[int], bool] | None = None):
    """Exact welfare-maximizing allocation; returns ``(Allocation, welfare)``.

    Searches every allocation by dynamic programming over per-good sold
    counts, which is exact because welfare depends on the other buyers'
    bundles only through those counts.  Among optimal allocations the one
    with the lexicographically smallest tuple of bundle bitmasks is returned.
    ``allowed_count`` restricts the final per-good counts (zero is always allowed).
    """
    caps = Caps.from_env() if caps is None else caps
    N, M = len(profile), instance.M
    if N > caps.opt_buyers or M > caps.opt_goods:
        raise CapExceeded(f"exact optimum capped at N<={caps.opt_buyers}, M<={caps.opt_goods}; got N={N}, M={M}")
    schedules = instance.schedules
    capacity = [s.capacity() for s in schedules]
    options = [_bundle_options(v, M) for v in profile]

    def terminal(x: tuple[int, ...]) -> Ext:
        total = Fraction(0)
        for i, n in enumerate(x):
            if n and allowed_count is not None and not allowed_count(n):
                return -INF
            total += schedules[i].total(n)
        return -total

    @lru_cache(maxsize=None)
    def best(j: int, x: tuple[int, ...]) -> Ext:
        if j == N:
            return terminal(x)
        top: Ext = -INF
        for mask, val in options[j]:
            y = _add(x, mask)
            if y is None:
                continue
            w = best(j + 1, y)
            if is_inf(w):
                continue
            if val + w > top:
                top = val + w
        return top

    def _add(x, mask):
        if not mask:
            return x
        y = list(x)
        for i in range(M):
            if mask >> i & 1:
                y[i] += 1
                if y[i] > capacity[i]:
                    return None
        return tuple(y)

    x = (0,) * M
    opt = best(0, x)
    bundles = []
    for j in range(N):
        target = best(j, x)
        for mask, val in options[j]:
            y = _add(x, mask)
            if y is None:
                continue
            w = best(j + 1, y)
            if not is_inf(w) and val + w == target:
                bundles.append(_mask_to_set(mask))
                x = y
                break
        else:  # pragma: no cover - the empty bundle always continues optimally
            raise AssertionError("optimal continuation lost during reconstruction")
    return Allocation(tuple(bundles)), opt


def exhaustive_opt(instance: Instance, profile: Sequence[Valuation], allowed_count: Callable[[int], bool] | None = None):
    """Reference optimum by enumerating all (2^M)^N allocations; tiny instances only."""
    N, M = len(profile), instance.M
    best_w: Ext = -INF
    best_alloc = Allocation.empty(N)
    masks = range(1 << M)
    for combo in itertools.product(masks, repeat=N):
        alloc = Allocation(tuple(_mask_to_set(m) for m in combo))
        if allowed_count is not None and any(n and not allowed_count(n) for n in alloc.counts(M)):
            continue
        try:
            w = social_welfare(instance, profile, alloc)
        except MarketError:
            continue
        if w > best_w:
            best_w, best_alloc = w, alloc
    return best_alloc, best_w
