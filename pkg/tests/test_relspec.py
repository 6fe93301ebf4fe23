from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmaccel.relspec import (
    EnumerationTooLarge,
    PresRelation,
    PresSet,
    Space,
    apply,
    compose,
    contains,
    domain,
    enumerate_set,
    enumeration_caps,
    eq,
    ge,
    inverse,
    lex_ge_relation,
    lexmax,
    parse,
    range_of,
    relation_from_dict,
    relation_to_dict,
    to_text,
    union,
)

CONV_READ = """
{ CONV_MXV[oh,ow] -> inp[id,ih,iw] :
    0 <= oh < OH and 0 <= ow < OW and 0 <= id < D
    and oh <= ih < oh + FH and ow <= iw < ow + FW }
"""


def test_parse_conv_read_relation():
    r = parse(CONV_READ, {"OH": 2, "OW": 2, "D": 1, "FH": 2, "FW": 2})
    assert contains(r, (0, 0, 0, 1, 1))
    assert not contains(r, (0, 0, 0, 2, 0))
    assert r.range_space.extents == (1, 3, 3)
    assert len(r.pairs()) == 16


def test_contains_checks_arity():
    r = parse(CONV_READ, {"OH": 2, "OW": 2, "D": 1, "FH": 2, "FW": 2})
    with pytest.raises(ValueError):
        contains(r, (0, 0, 0))


def test_enumerate_triangle():
    s = PresSet(Space.box("S", (2, 2)), ((ge((-1, 1)),),))
    assert enumerate_set(s) == [(0, 0), (0, 1), (1, 1)]


def test_empty_and_universe():
    sp = Space.box("A", (3,))
    assert PresSet.empty(sp).is_empty()
    assert enumerate_set(PresSet.universe(sp)) == [(0,), (1,), (2,)]


def test_text_round_trip():
    r = parse(CONV_READ, {"OH": 3, "OW": 2, "D": 2, "FH": 2, "FW": 1})
    again = parse(to_text(r))
    assert set(again.pairs()) == set(r.pairs())
    explicit = lexmax(r)
    assert set(parse(to_text(explicit), spaces=None).pairs()) == set(explicit.pairs())


def test_dict_round_trip():
    r = parse(CONV_READ, {"OH": 2, "OW": 2, "D": 1, "FH": 2, "FW": 2})
    assert relation_from_dict(relation_to_dict(r)) == r
    m = lexmax(r)
    assert relation_from_dict(relation_to_dict(m)) == m


def test_disjunction_and_union():
    a = parse("{ A[i] -> B[j] : 0 <= i < 3 and 0 <= j < 3 and j = i }")
    b = parse("{ A[i] -> B[j] : 0 <= i < 3 and 0 <= j < 3 and j = 2 - i }")
    u = union(a, b)
    both = parse("{ A[i] -> B[j] : 0 <= i < 3 and 0 <= j < 3 and (j = i or j = 2 - i) }")
    assert u == both
    assert len(u.pairs()) == 5


def test_domain_range_apply():
    r = parse("{ A[i] -> B[j] : 0 <= i < 4 and 0 <= j < 4 and j = i + 1 }")
    assert enumerate_set(domain(r)) == [(0,), (1,), (2,)]
    assert enumerate_set(range_of(r)) == [(1,), (2,), (3,)]
    img = apply(r, PresSet.from_points(r.domain_space, [(0,), (2,)]))
    assert enumerate_set(img) == [(1,), (3,)]


def test_compose_space_mismatch():
    a = parse("{ A[i] -> B[j] : 0 <= i < 2 and 0 <= j < 2 and j = i }")
    with pytest.raises(ValueError, match="space mismatch"):
        compose(a, a)


def test_lex_ge_count():
    s = PresSet.universe(Space.box("S", (2, 3)))
    assert len(lex_ge_relation(s).pairs()) == 6 * 7 // 2


def test_enumeration_cap():
    with enumeration_caps(points=10):
        with pytest.raises(EnumerationTooLarge, match="enumeration too large"):
            PresSet.universe(Space.box("Big", (4, 4))).points()
    assert len(PresSet.universe(Space.box("Big", (4, 4))).points()) == 16


def test_equality_is_extensional():
    sp = Space.box("A", (4,))
    a = PresSet(sp, ((ge((1,), -2),),))
    b = PresSet.from_points(sp, [(2,), (3,)])
    assert a == b


bound = st.tuples(st.integers(-2, 1), st.integers(0, 3)).map(lambda t: (t[0], t[0] + t[1]))


@st.composite
def relations(draw):
    dom = Space("A", tuple(draw(st.lists(bound, min_size=1, max_size=2))))
    ran = Space("B", tuple(draw(st.lists(bound, min_size=1, max_size=2))))
    n = dom.arity + ran.arity
    coeff = st.tuples(*[st.integers(-2, 2)] * n)
    conj = st.lists(st.builds(lambda c, k, e: eq(c, k) if e else ge(c, k), coeff, st.integers(-3, 3),
                              st.booleans()), max_size=3)
    return PresRelation(dom, ran, tuple(tuple(c) for c in draw(st.lists(conj, min_size=1, max_size=2))))


@settings(max_examples=100, deadline=None)
@given(relations())
def test_inverse_involution(r):
    assert inverse(inverse(r)) == r


@settings(max_examples=100, deadline=None)
@given(relations())
def test_lexmax_idempotent(r):
    m = lexmax(r)
    assert lexmax(m) == m
    assert m.is_functional()
    assert set(m.pairs()) <= set(r.pairs())


@settings(max_examples=50, deadline=None)
@given(relations())
def test_compose_with_identity(r):
    ident = PresRelation.from_pairs(r.range_space, r.range_space, [(b, b) for b in r.range_space.points().tolist()])
    assert compose(ident, r) == r
