"""Seeded instance generators.

A generator spec is a plain dict, e.g.::

    {"N": 3, "M": 2, "support": 2,
     "valuation": {"class": "xos", "clauses": 3, "max_value": 10},
     "cost": {"family": "quadratic", "scale": 1}}

Valuation classes: ``additive``, ``xos`` and ``subadditive`` (families
``budgeted``, ``coverage``, ``min_card``, ``half_card``).  Cost families:
``limited`` (``k``), ``constant``, ``linear``, ``quadratic``, ``custom``
(``marginals``) and ``mixed`` (``families``: one drawn per good).
"""
from __future__ import annotations

import hashlib
import math
import random
from fractions import Fraction
from typing import Any, Mapping

from .core import INF, CostSchedule, Good, Instance, MarketError, as_ext
from .valuations import Additive, ProfileDistribution, Table, XoS, validate

VALUATION_CLASSES = ("additive", "xos", "subadditive")
SUBADDITIVE_FAMILIES = ("budgeted", "coverage", "min_card", "half_card")
COST_FAMILIES = ("limited", "constant", "linear", "quadratic", "custom", "mixed")


def derive_seed(base_seed: int, index: int) -> int:
    """Stable per-row seed independent of Python's hash randomization."""
    digest = hashlib.sha256(f"{base_seed}:{index}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _count(rng: random.Random, x, name: str) -> int:
    if isinstance(x, int) and not isinstance(x, bool):
        return x
    if isinstance(x, (list, tuple)) and len(x) == 2:
        return rng.randint(int(x[0]), int(x[1]))
    raise MarketError(f"{name} must be an integer or a [lo, hi] range, got {x!r}")


def _rational(rng: random.Random, hi: int, zero_ok: bool = True) -> Fraction:
    lo = 0 if zero_ok else 1
    return Fraction(rng.randint(lo, hi))


def _weights(rng, M, max_value, density):
    return {i: _rational(rng, max_value) for i in range(M) if rng.random() < density}


def _subadditive(rng, M, spec) -> Table:
    family = spec.get("family", "budgeted")
    hi = int(spec.get("max_value", 10))
    goods = list(range(M))
    if family == "budgeted":
        a = {i: _rational(rng, hi) for i in goods}
        b = _rational(rng, max(1, hi * M // 2), zero_ok=False)
        f = lambda S: min(sum((a[i] for i in S), Fraction(0)), b)
    elif family == "coverage":
        n_el = int(spec.get("elements", max(2, M)))
        w = [_rational(rng, hi) for _ in range(n_el)]
        cover = {i: {e for e in range(n_el) if rng.random() < 0.5} for i in goods}
        f = lambda S: sum((w[e] for e in set().union(*(cover[i] for i in S))), Fraction(0)) if S else Fraction(0)
    elif family == "min_card":
        cap = int(spec.get("cap", 2))
        scale = _rational(rng, hi, zero_ok=False)
        f = lambda S: scale * min(len(S), cap)
    elif family == "half_card":
        scale = _rational(rng, hi, zero_ok=False)
        f = lambda S: scale * math.ceil(len(S) / 2)
    else:
        raise MarketError(f"unknown subadditive family {family!r}; expected one of {SUBADDITIVE_FAMILIES}")
    t = Table.from_function(goods, f)
    bad = validate(t)
    if bad is not None:  # pragma: no cover - families are subadditive by construction
        raise MarketError(f"generated table is not subadditive: {bad}")
    return t


def _valuation(rng: random.Random, M: int, spec: Mapping[str, Any]):
    cls = spec.get("class", "additive")
    hi = int(spec.get("max_value", 10))
    density = float(spec.get("density", 1.0))
    if cls == "additive":
        return Additive.of(_weights(rng, M, hi, density))
    if cls == "xos":
        n = _count(rng, spec.get("clauses", [1, 3]), "clauses")
        if n < 1:
            raise MarketError("an XoS valuation needs at least one clause")
        return XoS.of(*(_weights(rng, M, hi, density) for _ in range(n)))
    if cls == "subadditive":
        return _subadditive(rng, M, spec)
    raise MarketError(f"unknown valuation class {cls!r}; expected one of {VALUATION_CLASSES}")


def _schedule(rng: random.Random, N: int, spec: Mapping[str, Any]) -> CostSchedule:
    family = spec.get("family", "linear")
    n_max = int(spec.get("n_max", N))
    if family == "mixed":
        options = spec.get("families", ["limited", "constant", "linear", "quadratic"])
        return _schedule(rng, N, {**spec, "family": rng.choice(list(options))})
    if family == "limited":
        k = _count(rng, spec.get("k", [1, N]), "k")
        return CostSchedule.limited_supply(k)
    if family == "custom":
        if "marginals" not in spec:
            raise MarketError("custom cost family needs 'marginals'")
        return CostSchedule(tuple(as_ext(c) for c in spec["marginals"]))
    scale = spec.get("scale", [0, 3])
    a = Fraction(_count(rng, scale, "scale"))
    if family == "constant":
        ms = [a] * n_max
    elif family == "linear":
        ms = [a * n for n in range(1, n_max + 1)]
    elif family == "quadratic":
        ms = [a * n * n for n in range(1, n_max + 1)]
    else:
        raise MarketError(f"unknown cost family {family!r}; expected one of {COST_FAMILIES}")
    if spec.get("cap") is not None:
        ms = ms[: int(spec["cap"])] + [INF]
    return CostSchedule(tuple(ms))


def _probabilities(rng: random.Random, n: int) -> list[Fraction]:
    w = [rng.randint(1, 4) for _ in range(n)]
    total = sum(w)
    return [Fraction(x, total) for x in w]


def generate_instance(spec: Mapping[str, Any], seed: int) -> Instance:
    """Build an instance deterministically from ``spec`` and ``seed``.

    ``valuation.weights`` (one weight list per buyer) pins additive values
    instead of drawing them; ``cost.marginals`` with family ``custom`` pins costs.
    """
    if not isinstance(spec, Mapping):
        raise MarketError("generator spec must be a mapping")
    rng = random.Random(seed)
    try:
        N, M = int(spec["N"]), int(spec["M"])
    except (KeyError, TypeError, ValueError):
        raise MarketError("generator spec needs integer 'N' and 'M'") from None
    if N < 1 or M < 1:
        raise MarketError("need N >= 1 and M >= 1")
    vspec = dict(spec.get("valuation", {}))
    cspec = dict(spec.get("cost", {}))
    goods = tuple(Good(i, _schedule(rng, N, cspec)) for i in range(M))
    pinned = vspec.get("weights")
    if pinned is not None:
        if len(pinned) != N or any(len(w) != M for w in pinned):
            raise MarketError("valuation.weights needs N rows of M weights")
        buyers = tuple(((Fraction(1), Additive.of({i: as_ext(x) for i, x in enumerate(w)})),) for w in pinned)
        return Instance(goods, ProfileDistribution(buyers))
    buyers = []
    for _ in range(N):
        k = _count(rng, spec.get("support", 1), "support")
        if k < 1:
            raise MarketError("support size must be >= 1")
        probs = _probabilities(rng, k)
        buyers.append(tuple((p, _valuation(rng, M, vspec)) for p in probs))
    return Instance(goods, ProfileDistribution(tuple(buyers)))
