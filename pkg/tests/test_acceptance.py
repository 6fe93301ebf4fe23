"""End-to-end acceptance checks, one group per criterion.

Run ``pytest tests/test_acceptance.py``; the terminal summary prints one
PASS/FAIL line per criterion.
"""

from __future__ import annotations

import itertools
import json

import numpy as np
import pytest

from cmaccel import tensorio, zoo
from cmaccel.cli import main as cli_main
from cmaccel.depsm import compute_S, oracle_S
from cmaccel.errors import MappingError, RawViolation
from cmaccel.lower import bundle_to_json, compile_model
from cmaccel.nnmodel import load_model, reference_eval
from cmaccel.partition import _make_plan, partition, validate_plan
from cmaccel.placemap import Mapping, check_mapping, load_hw, map_partitions
from cmaccel.relspec import (
    AffineConstraint,
    PresRelation,
    PresSet,
    Space,
    compose,
    inverse,
    lex_ge_relation,
    lexmax,
    parse,
)
from cmaccel.simcm import Simulator, run, sabotage_tables

from conftest import FIXTURES, GOLDEN

FEASIBLE = [
    ("single_conv", "chain2"),
    ("conv_relu", "chain2"),
    ("chain3", "chain3"),
    ("chain3", "mesh2x3"),
    ("residual", "chain2"),
    ("residual", "mesh2x3"),
    ("chain_1d", "chain2"),
    ("chain_1d", "mesh2x3"),
]


def fixture_model(name):
    return load_model((FIXTURES / "models" / f"{name}.json").read_text())


def fixture_hw(name):
    return load_hw((FIXTURES / "hw" / f"{name}.json").read_text())


# --- 1 ---------------------------------------------------------------------


@pytest.mark.criterion(1)
def test_pinned_1d_case():
    W1 = parse("{ I[i] -> O[o] : 0 <= i < 8 and o = i }")
    R2 = parse("{ J[j] -> O[o] : 0 <= j < 6 and j <= o <= j + 2 }")
    S = compute_S(W1, R2).S
    expected = {((o,), (o - 2,)) for o in range(2, 8)}
    assert set(S.pairs()) == expected
    assert S == oracle_S(W1, R2)


@pytest.mark.criterion(1)
def test_random_conv_and_add_cases():
    rng = np.random.default_rng(1001)
    kinds = set()
    for _ in range(100):
        W1, R2, desc = zoo.random_dependency_case(rng)
        kinds.add((desc["writer"], desc["reader"]))
        assert compute_S(W1, R2).S == oracle_S(W1, R2), desc
    assert {"add", "conv"} <= {r for _, r in kinds}


# --- 2 ---------------------------------------------------------------------

GOLDEN_MODELS = [("conv_relu", "chain2"), ("chain3", "chain3"), ("residual", "mesh2x3")]


@pytest.mark.criterion(2)
@pytest.mark.parametrize("model,hw", GOLDEN_MODELS)
def test_bit_exact(model, hw):
    g = fixture_model(model)
    bundle = compile_model(g, fixture_hw(hw))
    rng = np.random.default_rng(2000 + len(model))
    xs = [zoo.random_input(g, rng) for _ in range(20)]
    for x in xs:
        (out,), _, _ = run(bundle, [x])
        assert np.array_equal(out, reference_eval(g, x))
    # the same inputs streamed as consecutive frames
    outs, stats, _ = run(bundle, xs)
    assert stats.frames == 20
    for x, out in zip(xs, outs):
        assert np.array_equal(out, reference_eval(g, x))


# --- 3 ---------------------------------------------------------------------


@pytest.mark.criterion(3)
@pytest.mark.parametrize("model,hw", FEASIBLE)
def test_no_raw_violations(model, hw):
    g = fixture_model(model)
    bundle = compile_model(g, fixture_hw(hw))
    rng = np.random.default_rng(3000)
    xs = [zoo.random_input(g, rng) for _ in range(3)]
    outs, _, _ = run(bundle, xs)  # raises RawViolation on any premature read
    assert all(np.array_equal(o, reference_eval(g, x)) for o, x in zip(outs, xs))


@pytest.mark.criterion(3)
def test_sabotaged_table_is_caught():
    g = fixture_model("chain3")
    bundle = compile_model(g, fixture_hw("chain3"))
    x = zoo.random_input(g, np.random.default_rng(3001))
    run(bundle, [x])
    with pytest.raises(RawViolation) as info:
        run(sabotage_tables(bundle), [x])
    assert info.value.object in {"x", "ar", "b"}


# --- 4 ---------------------------------------------------------------------


@pytest.mark.criterion(4)
def test_residual_partitions():
    plan = partition(fixture_model("residual"))
    assert len(plan.partitions) == 2
    assert "add" in plan.partitions[1].members
    assert validate_plan(plan)


@pytest.mark.criterion(4)
@pytest.mark.parametrize("model", sorted(zoo.MODELS))
def test_partition_per_conv(model):
    g = fixture_model(model)
    plan = partition(g)
    assert len(plan.partitions) == len(g.conv_nodes)
    assert validate_plan(plan, g)


@pytest.mark.criterion(4)
def test_validate_rejects_hand_built_violations():
    g = fixture_model("residual")
    two_convs = _make_plan(g, {"conv1": 0, "conv2": 0, "add": 0})
    report = validate_plan(two_convs, g)
    assert not report and "more than one convolution" in report.first

    misplaced_add = _make_plan(g, {"conv1": 0, "conv2": 1, "add": 0})
    report = validate_plan(misplaced_add, g)
    assert not report and any("cycle" in v for v in report.violations)


# --- 5 ---------------------------------------------------------------------


@pytest.mark.criterion(5)
@pytest.mark.parametrize("model,hw", FEASIBLE)
def test_mapping_passes_recheck(model, hw):
    g, h = fixture_model(model), fixture_hw(hw)
    plan = partition(g)
    mapping = map_partitions(plan, h, g)
    assert check_mapping(plan, h, g, mapping) == []


@pytest.mark.criterion(5)
def test_recheck_is_not_vacuous():
    g, h = fixture_model("residual"), fixture_hw("chain2")
    plan = partition(g)
    swapped = Mapping({0: 1, 1: 0}, {(0, 1): (1, 0)})
    problems = check_mapping(plan, h, g, swapped)
    assert any("no link" in p for p in problems)
    assert any("GCU" in p for p in problems)


@pytest.mark.criterion(5)
def test_width_violation_is_capacity():
    g = fixture_model("wide_conv")
    with pytest.raises(MappingError) as info:
        map_partitions(partition(g), fixture_hw("chain2"), g)
    assert info.value.kind == "capacity"


@pytest.mark.criterion(5)
def test_disconnected_is_connectivity():
    g = fixture_model("residual")
    with pytest.raises(MappingError) as info:
        map_partitions(partition(g), fixture_hw("disconnected"), g)
    assert info.value.kind == "connectivity"


# --- 6 ---------------------------------------------------------------------


@pytest.mark.criterion(6)
def test_golden_trace_first_active():
    g = fixture_model("chain_1d")
    x = tensorio.load(FIXTURES / "inputs" / "chain_1d.in")
    (out,), stats, trace = run(compile_model(g, fixture_hw("chain2")), [x], trace=True)
    assert np.array_equal(out, tensorio.load(FIXTURES / "inputs" / "chain_1d.ref"))
    assert "".join(t + "\n" for t in trace) == (GOLDEN / "chain_1d.trace").read_text()
    first_exec_c1 = min(int(t.split()[0]) for t in trace if t.split()[1:3] == ["c1", "exec"])
    assert first_exec_c1 == 3 == stats.first_active[1]
    assert stats.first_active[1] < stats.last_active[0]


@pytest.mark.criterion(6)
@pytest.mark.parametrize("model,hw", [f for f in FEASIBLE if f[0] != "single_conv" and f[0] != "conv_relu"])
def test_downstream_overlaps_upstream(model, hw):
    g = fixture_model(model)
    bundle = compile_model(g, fixture_hw(hw))
    (_,), stats, _ = run(bundle, [zoo.random_input(g, np.random.default_rng(6))])
    core_of = {int(p): c for p, c in bundle["mapping"]["partitions"].items()}
    edges = bundle["plan"]["edges"]
    assert edges
    for e in edges:
        up, down = core_of[e["source"]], core_of[e["dest"]]
        assert stats.first_active[down] < stats.last_active[up]


# --- 7 ---------------------------------------------------------------------


def _rand_space(rng, name):
    arity = int(rng.integers(1, 3))
    bounds = []
    for _ in range(arity):
        lo = int(rng.integers(-2, 2))
        bounds.append((lo, lo + int(rng.integers(0, 4))))
    return Space(name, tuple(bounds))


def _rand_relation(rng, dom, ran):
    n = dom.arity + ran.arity
    disjuncts = []
    for _ in range(int(rng.integers(1, 3))):
        conj = []
        for _ in range(int(rng.integers(0, 4))):
            coeffs = tuple(int(c) for c in rng.integers(-2, 3, size=n))
            conj.append(AffineConstraint(coeffs, int(rng.integers(-3, 4)), bool(rng.random() < 0.15)))
        disjuncts.append(tuple(conj))
    return PresRelation(dom, ran, tuple(disjuncts))


def _box(space):
    return list(itertools.product(*(range(lo, hi + 1) for lo, hi in space.bounds)))


def _members(r):
    """Pure-Python enumeration, independent of the library's vectorized filter."""
    out = set()
    for a in _box(r.domain_space):
        for b in _box(r.range_space):
            t = a + b
            for conj in r.disjuncts:
                ok = True
                for c in conj:
                    v = c.const + sum(k * x for k, x in zip(c.coeffs, t))
                    if (v != 0) if c.eq else (v < 0):
                        ok = False
                        break
                if ok:
                    out.add((a, b))
                    break
    return out


@pytest.mark.criterion(7)
def test_relation_algebra_properties():
    rng = np.random.default_rng(7007)
    for case in range(500):
        A, B, C = (_rand_space(rng, n) for n in "ABC")
        r = _rand_relation(rng, A, B)
        s = _rand_relation(rng, B, C)
        r_pairs = _members(r)
        assert set(r.pairs()) == r_pairs, case

        # inverse is an involution
        assert inverse(inverse(r)) == r
        assert set(inverse(r).pairs()) == {(b, a) for a, b in r_pairs}

        # lexmax: functional, same domain, picks the greatest image
        lm = lexmax(r)
        assert lm.is_functional()
        assert {a for a, _ in lm.pairs()} == {a for a, _ in r_pairs}
        for a, b in lm.pairs():
            assert b == max(y for x, y in r_pairs if x == a)

        # compose against a triple loop with an existential middle
        s_pairs = _members(s)
        expected = {
            (i, j)
            for i in _box(A)
            for j in _box(C)
            if any((i, k) in r_pairs and (k, j) in s_pairs for k in _box(B))
        }
        assert set(compose(s, r).pairs()) == expected, case

        # lex_ge_relation over the domain of r
        pts = sorted({a for a, _ in r_pairs})
        if not pts:
            continue
        ge = set(lex_ge_relation(PresSet.from_points(A, pts)).pairs())
        n = len(pts)
        assert len(ge) == n * (n + 1) // 2
        for x in pts:
            assert (x, x) in ge
            for y in pts:
                assert ((x, y) in ge) == (y <= x)
                if x != y:
                    assert ((x, y) in ge) != ((y, x) in ge)


# --- 8 ---------------------------------------------------------------------


@pytest.mark.criterion(8)
def test_cli_determinism(tmp_path):
    blobs = []
    for k in range(2):
        d = tmp_path / f"run{k}"
        d.mkdir()
        args = ["--model", str(FIXTURES / "models" / "residual.json"), "--hw", str(FIXTURES / "hw" / "mesh2x3.json")]
        assert cli_main(["compile", *args, "--out", str(d / "b.json")]) == 0
        assert cli_main([
            "run", "--bundle", str(d / "b.json"), "--input", str(FIXTURES / "inputs" / "residual.in"),
            "--output", str(d / "y.bin"), "--trace", str(d / "t.txt"), "--stats", str(d / "s.json"),
        ]) == 0
        blobs.append([(d / f).read_bytes() for f in ("b.json", "y.bin", "t.txt", "s.json")])
    assert blobs[0] == blobs[1]


@pytest.mark.criterion(8)
@pytest.mark.parametrize("model,hw", FEASIBLE)
def test_seeded_determinism(model, hw):
    g = fixture_model(model)
    b1 = bundle_to_json(compile_model(g, fixture_hw(hw)))
    b2 = bundle_to_json(compile_model(fixture_model(model), fixture_hw(hw)))
    assert b1 == b2
    runs = []
    for _ in range(2):
        rng = np.random.default_rng(8008)
        xs = [zoo.random_input(g, rng) for _ in range(2)]
        outs, stats, trace = Simulator(json.loads(b1), trace=True).run(xs)
        runs.append((tensorio.dumps(np.stack(outs), "int32"), "\n".join(trace), json.dumps(stats.to_dict())))
    assert runs[0] == runs[1]
