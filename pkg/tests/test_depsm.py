from __future__ import annotations

import pytest

from cmaccel.depsm import LcuTable, compute_S, frontier, oracle_S, synthesize_lcu, unlocked_index
from cmaccel.errors import DependencyError
from cmaccel.relspec import PresRelation, Space, parse

W1 = "{ I[i] -> O[o] : 0 <= i < 8 and o = i }"
R2 = "{ J[j] -> O[o] : 0 <= j < 6 and j <= o <= j + 2 }"


def test_1d_chain_intermediates():
    ch = compute_S(parse(W1), parse(R2))
    assert set(ch.K.pairs()) == {((j,), (i,)) for j in range(6) for i in range(j, j + 3)}
    assert set(ch.L.pairs()) == {((j,), (j + 2,)) for j in range(6)}
    assert set(ch.M.pairs()) == {((j,), (j + 2,)) for j in range(6)}
    assert set(ch.S.pairs()) == {((o,), (o - 2,)) for o in range(2, 8)}


def test_non_injective_writer():
    w = parse("{ I[i] -> O[o] : 0 <= i < 4 and 0 <= o < 2 and 2*o <= i <= 2*o + 1 }")
    r = parse("{ J[j] -> O[o] : 0 <= j < 2 and 0 <= o < 2 and o = j }")
    with pytest.raises(DependencyError, match="not injective"):
        compute_S(w, r)


def test_space_mismatch():
    w = parse("{ I[i] -> O[o] : 0 <= i < 4 and o = i }")
    r = parse("{ J[j] -> O[o] : 0 <= j < 3 and o = j }")
    with pytest.raises(DependencyError, match="space mismatch"):
        compute_S(w, r)


def test_empty_read():
    w = parse(W1)
    r = PresRelation.empty(Space.box("J", (6,)), w.range_space)
    with pytest.raises(DependencyError, match="does not read"):
        compute_S(w, r)


def test_reverse_writer_order():
    # the writer produces locations back to front; nothing unlocks until the last write
    w = parse("{ I[i] -> O[o] : 0 <= i < 4 and 0 <= o < 4 and o = 3 - i }")
    r = parse("{ J[j] -> O[o] : 0 <= j < 4 and 0 <= o < 4 and o = j }")
    S = compute_S(w, r).S
    assert set(S.pairs()) == {((0,), (3,))}
    assert S == oracle_S(w, r)


def test_lcu_table_for_1d_chain():
    ch = compute_S(parse(W1), parse(R2))
    lcu = synthesize_lcu({"O": ("core0", ch)}, ch.R2.domain_space)
    (t,) = lcu.objects
    assert t.initial is None
    assert t.entries == tuple(((o,), (o - 2,)) for o in range(2, 8))
    assert LcuTable.from_dict(lcu.to_dict()) == lcu


def test_free_iterations_fold_into_table():
    # iterations 0 and 3 read nothing: 0 runs immediately, 3 follows iteration 2
    w = parse("{ I[i] -> O[o] : 0 <= i < 2 and o = i }")
    # explicit spaces: bound inference would shrink J to the iterations that read
    r = parse("{ J[j] -> O[o] : (j = 1 and o = 0) or (j = 2 and o = 1) }",
              spaces=[Space.box("J", (4,)), w.range_space])
    ch = compute_S(w, r)
    t = synthesize_lcu({"O": ("w", ch)}, r.domain_space).objects[0]
    assert t.initial == (0,)
    assert dict(t.entries) == {(0,): (1,), (1,): (3,)}


def test_synthesize_requires_objects():
    with pytest.raises(DependencyError):
        synthesize_lcu({}, Space.box("J", (2,)))


def test_frontier_rule():
    iters = [(0, 0), (0, 1), (1, 0), (1, 1)]
    assert frontier({"a": (1, 0), "b": (0, 1)}) == (0, 1)
    assert frontier({"a": (1, 0), "b": None}) is None
    assert unlocked_index(iters, (0, 1)) == 1
    assert unlocked_index(iters, None) == -1
