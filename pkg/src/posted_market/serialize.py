"""Lossless JSON encoding of instances, price plans and outcomes.

Rationals are ``{"num": "3", "den": "4"}`` and infinities the strings
``"inf"``/``"-inf"``; no floats are ever written.
"""
from __future__ import annotations

import json
from fractions import Fraction
from typing import Any

from .core import INF, Allocation, CostSchedule, Good, Instance, MarketError, is_inf
from .mechanisms import ExpectedOutcome, MechanismOutcome, VerificationReport
from .pricing import PricePlan, Supply
from .valuations import Additive, AdditiveClause, ProfileDistribution, Table, XoS


class SchemaError(MarketError):
    """A JSON document does not match the expected layout; ``path`` locates the problem."""

    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}")
        self.path = path


def ext_to_json(x) -> Any:
    if is_inf(x):
        return "inf" if x > 0 else "-inf"
    if isinstance(x, bool):
        raise MarketError(f"not a rational: {x!r}")
    if isinstance(x, int):
        x = Fraction(x)
    if not isinstance(x, Fraction):
        raise MarketError(f"refusing to serialize non-rational {x!r}")
    return {"num": str(x.numerator), "den": str(x.denominator)}


def ext_from_json(obj, path: str = "$"):
    if obj == "inf":
        return INF
    if obj == "-inf":
        return -INF
    if isinstance(obj, dict) and set(obj) == {"num", "den"}:
        try:
            num, den = int(obj["num"]), int(obj["den"])
        except (TypeError, ValueError):
            raise SchemaError(path, f"num/den must be integer strings, got {obj}") from None
        if den <= 0:
            raise SchemaError(path, "denominator must be positive")
        return Fraction(num, den)
    if isinstance(obj, int) and not isinstance(obj, bool):
        return Fraction(obj)
    raise SchemaError(path, f"expected a rational object or 'inf', got {obj!r}")


def _get(obj, key, path):
    if not isinstance(obj, dict):
        raise SchemaError(path, f"expected an object, got {type(obj).__name__}")
    if key not in obj:
        raise SchemaError(path, f"missing key {key!r}")
    return obj[key]


def _list(obj, path):
    if not isinstance(obj, list):
        raise SchemaError(path, f"expected a list, got {type(obj).__name__}")
    return obj


# --------------------------------------------------------------------------
# valuations and instances


def _clause_to_json(a: AdditiveClause):
    return [[i, ext_to_json(w)] for i, w in a.items]


def _clause_from_json(obj, path):
    items = []
    for n, pair in enumerate(_list(obj, path)):
        p = f"{path}[{n}]"
        if not isinstance(pair, list) or len(pair) != 2 or not isinstance(pair[0], int):
            raise SchemaError(p, "expected [good_id, rational]")
        items.append((pair[0], ext_from_json(pair[1], f"{p}[1]")))
    return AdditiveClause(tuple(items))


def valuation_to_json(v) -> dict:
    if isinstance(v, Additive):
        return {"type": "additive", "weights": _clause_to_json(v.clause)}
    if isinstance(v, XoS):
        return {"type": "xos", "clauses": [_clause_to_json(a) for a in v.clauses]}
    if isinstance(v, Table):
        return {"type": "table", "universe": list(v.universe), "values": [ext_to_json(x) for x in v.values]}
    raise MarketError(f"unknown valuation {type(v).__name__}")


def valuation_from_json(obj, path: str = "$"):
    kind = _get(obj, "type", path)
    try:
        if kind == "additive":
            return Additive(_clause_from_json(_get(obj, "weights", path), f"{path}.weights"))
        if kind == "xos":
            clauses = _list(_get(obj, "clauses", path), f"{path}.clauses")
            return XoS(tuple(_clause_from_json(c, f"{path}.clauses[{n}]") for n, c in enumerate(clauses)))
        if kind == "table":
            universe = _list(_get(obj, "universe", path), f"{path}.universe")
            values = _list(_get(obj, "values", path), f"{path}.values")
            return Table(tuple(universe), tuple(ext_from_json(x, f"{path}.values[{n}]") for n, x in enumerate(values)))
    except SchemaError:
        raise
    except MarketError as e:
        raise SchemaError(path, str(e)) from None
    raise SchemaError(f"{path}.type", f"unknown valuation type {kind!r}")


def instance_to_json(inst: Instance) -> dict:
    return {
        "goods": [{"id": g.id, "marginal_costs": [ext_to_json(c) for c in g.cost.marginals]} for g in inst.goods],
        "buyers": [
            {"support": [{"prob": ext_to_json(p), "valuation": valuation_to_json(v)} for p, v in support]}
            for support in inst.distribution.buyers
        ],
    }


def instance_from_json(obj, path: str = "$") -> Instance:
    goods = []
    for n, g in enumerate(_list(_get(obj, "goods", path), f"{path}.goods")):
        p = f"{path}.goods[{n}]"
        gid = _get(g, "id", p)
        costs = _list(_get(g, "marginal_costs", p), f"{p}.marginal_costs")
        try:
            goods.append(Good(gid, CostSchedule(tuple(ext_from_json(c, f"{p}.marginal_costs[{m}]")
                                                     for m, c in enumerate(costs)))))
        except SchemaError:
            raise
        except MarketError as e:
            raise SchemaError(p, str(e)) from None
    buyers = []
    for n, b in enumerate(_list(_get(obj, "buyers", path), f"{path}.buyers")):
        p = f"{path}.buyers[{n}]"
        support = []
        for m, pt in enumerate(_list(_get(b, "support", p), f"{p}.support")):
            q = f"{p}.support[{m}]"
            support.append((ext_from_json(_get(pt, "prob", q), f"{q}.prob"),
                            valuation_from_json(_get(pt, "valuation", q), f"{q}.valuation")))
        buyers.append(tuple(support))
    try:
        return Instance(tuple(goods), ProfileDistribution(tuple(buyers)))
    except MarketError as e:
        raise SchemaError(path, str(e)) from None


# --------------------------------------------------------------------------
# plans and outcomes


def _plain(x):
    """Provenance values: rationals encoded, containers recursed, scalars kept."""
    if isinstance(x, (Fraction, float)) and not isinstance(x, bool):
        return ext_to_json(x)
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return x


def plan_to_json(plan: PricePlan) -> dict:
    return {
        "goods": [
            {"id": i, "price": ext_to_json(plan.prices[i]),
             "supply": [[k, ext_to_json(p)] for k, p in plan.supply[i].dist]}
            for i in plan.goods
        ],
        "provenance": _plain(dict(plan.provenance)),
    }


def plan_from_json(obj, path: str = "$") -> PricePlan:
    prices, supply = {}, {}
    for n, g in enumerate(_list(_get(obj, "goods", path), f"{path}.goods")):
        p = f"{path}.goods[{n}]"
        i = _get(g, "id", p)
        prices[i] = ext_from_json(_get(g, "price", p), f"{p}.price")
        pts = _list(_get(g, "supply", p), f"{p}.supply")
        try:
            supply[i] = Supply(tuple((k, ext_from_json(q, f"{p}.supply[{m}][1]")) for m, (k, q) in enumerate(pts)))
        except (TypeError, ValueError) as e:
            raise SchemaError(f"{p}.supply", str(e)) from None
    provenance = obj.get("provenance", {}) if isinstance(obj, dict) else {}
    return PricePlan(prices, supply, _unplain(provenance))


def _unplain(x):
    if isinstance(x, dict):
        if set(x) == {"num", "den"}:
            return ext_from_json(x)
        return {k: _unplain(v) for k, v in x.items()}
    if isinstance(x, list):
        return [_unplain(v) for v in x]
    if x in ("inf", "-inf"):
        return ext_from_json(x)
    return x


def outcome_to_json(out: MechanismOutcome) -> dict:
    return {
        "kind": out.kind,
        "order": list(out.order),
        "supply": [[i, k] for i, k in sorted(out.supply.items())],
        "bundles": [sorted(b) for b in out.allocation.bundles],
        "sold": list(out.sold),
        "revenue": ext_to_json(out.revenue),
        "production_cost": ext_to_json(out.production_cost),
        "surplus": ext_to_json(out.surplus),
        "profit": ext_to_json(out.profit),
        "welfare": ext_to_json(out.welfare),
        "profit_by_good": [ext_to_json(x) for x in out.profit_by_good],
    }


def outcome_from_json(obj, path: str = "$") -> MechanismOutcome:
    def rat(key):
        return ext_from_json(_get(obj, key, path), f"{path}.{key}")

    return MechanismOutcome(
        kind=_get(obj, "kind", path),
        order=tuple(_get(obj, "order", path)),
        supply={i: k for i, k in _get(obj, "supply", path)},
        allocation=Allocation(tuple(frozenset(b) for b in _get(obj, "bundles", path))),
        sold=tuple(_get(obj, "sold", path)),
        revenue=rat("revenue"),
        production_cost=rat("production_cost"),
        surplus=rat("surplus"),
        profit=rat("profit"),
        welfare=rat("welfare"),
        profit_by_good=tuple(ext_from_json(x, f"{path}.profit_by_good[{n}]")
                             for n, x in enumerate(_get(obj, "profit_by_good", path))),
    )


def expected_to_json(e: ExpectedOutcome) -> dict:
    return {
        "kind": e.kind,
        "policy": e.policy,
        **{f: ext_to_json(getattr(e, f)) for f in ("revenue", "production_cost", "surplus", "profit", "welfare")},
        "order_welfare": [[list(o), ext_to_json(w)] for o, w in e.order_welfare],
        "worst_order": None if e.worst_order is None else list(e.worst_order),
        "estimated": e.estimated,
        "runs": e.runs,
    }


def _report_value(x):
    if isinstance(x, PricePlan):
        return plan_to_json(x)
    if isinstance(x, frozenset):
        return sorted(x)
    if isinstance(x, dict):
        return {str(k): _report_value(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_report_value(v) for v in x]
    if isinstance(x, (Fraction, float)) and not isinstance(x, bool):
        return ext_to_json(x)
    return x


def report_to_json(r: VerificationReport) -> dict:
    return {
        "name": r.name,
        "claimed": r.claimed,
        "passed": r.passed,
        "checks": [
            {"name": c.name, "passed": c.passed, "asserted": c.asserted,
             "lhs": _report_value(c.lhs), "rhs": _report_value(c.rhs), "detail": c.detail}
            for c in r.checks
        ],
        "data": _report_value(r.data),
    }


def dumps(obj: dict) -> str:
    """Canonical text form: sorted keys, fixed separators, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def load(path: str) -> Any:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def save(obj: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(obj))
