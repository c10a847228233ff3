from __future__ import annotations

import itertools
from fractions import Fraction

from hypothesis import settings, strategies as st

from posted_market.core import INF, CostSchedule, Good, Instance
from posted_market.valuations import Additive, AdditiveClause, ProfileDistribution, Table, XoS

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

small_int = st.integers(min_value=0, max_value=12)


@st.composite
def schedules(draw, max_len=5, allow_inf=True):
    ms = sorted(draw(st.lists(small_int, min_size=1, max_size=max_len)))
    out = [Fraction(m) for m in ms]
    if allow_inf and draw(st.booleans()):
        out.append(INF)
    return CostSchedule(tuple(out))


@st.composite
def finite_schedules(draw, length):
    ms = sorted(draw(st.lists(small_int, min_size=length, max_size=length)))
    return CostSchedule(tuple(Fraction(m) for m in ms))


@st.composite
def clauses(draw, M):
    ws = draw(st.lists(small_int, min_size=M, max_size=M))
    return AdditiveClause(tuple((i, Fraction(w)) for i, w in enumerate(ws)))


@st.composite
def xos_valuations(draw, M, max_clauses=3):
    n = draw(st.integers(min_value=1, max_value=max_clauses))
    return XoS(tuple(draw(clauses(M)) for _ in range(n)))


@st.composite
def additive_valuations(draw, M):
    return Additive(draw(clauses(M)))


@st.composite
def small_instances(draw, max_goods=3, max_buyers=3, max_support=1):
    M = draw(st.integers(min_value=1, max_value=max_goods))
    N = draw(st.integers(min_value=1, max_value=max_buyers))
    goods = tuple(Good(i, draw(schedules())) for i in range(M))
    buyers = []
    for _ in range(N):
        k = draw(st.integers(min_value=1, max_value=max_support))
        w = draw(st.lists(st.integers(min_value=1, max_value=3), min_size=k, max_size=k))
        buyers.append(tuple((Fraction(x, sum(w)), draw(xos_valuations(M))) for x in w))
    return Instance(goods, ProfileDistribution(tuple(buyers)))


def subsets(items):
    items = sorted(items)
    for r in range(len(items) + 1):
        yield from (frozenset(c) for c in itertools.combinations(items, r))


def min_card(M, cap=2, scale=1):
    return Table.from_function(range(M), lambda S: Fraction(scale * min(len(S), cap)))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:  # pragma: no cover
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        ok, detail = RESULTS[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
