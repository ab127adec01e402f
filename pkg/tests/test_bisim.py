import csv
import io
import json
from fractions import Fraction
from itertools import combinations

import pytest
from hypothesis import given, settings

from ptleak.bisim import (
    ClassMatch, DeltaPrimeEngine, LogTime, TimeRescale, chi, delta, delta_prime, log_time, matrix_csv,
    pt_secure, refine, stratify,
)
from ptleak.lang import parse_program
from ptleak.semantics import TimedTree, initial_env

from progen import bisimilar, tree_pairs

F = Fraction
NAMES = ("T1", "T2", "T3", "T4")
DELTA_TABLE = {
    ("T1", "T2"): F(1, 2), ("T1", "T3"): F(1), ("T1", "T4"): F(0),
    ("T2", "T3"): F(1), ("T2", "T4"): F(1, 2), ("T3", "T4"): F(1),
}


def test_stratify_chain_and_branching(small_trees):
    t1, t2 = small_trees["T1"], small_trees["T2"]
    layers = stratify(t1, t1)
    assert [len(l.first) for l in layers] == [1, 1, 1, 1]
    assert [l.height for l in layers] == [0, 1, 2, 3]
    layer1 = stratify(t2, t2)[1].first
    h = t2.heights()
    assert len(layer1) == 2 and all(h[n] == 1 for n in layer1)
    leaf = TimedTree.from_nested("x")
    assert len(stratify(leaf, leaf)) == 1


def test_refine_examples(small_trees):
    t1, t3, t4 = small_trees["T1"], small_trees["T3"], small_trees["T4"]
    part = refine(t1, t4)
    assert part.same_block((0, t1.root), (1, t4.root))
    part = refine(t1, t3)
    assert not part.same_block((0, t1.root), (1, t3.root))
    part = refine(t1, t1)
    assert part.same_block((0, t1.root), (1, t1.root))
    assert len(set(part.block_of.values())) == 4


def test_partition_respects_labels_and_heights(small_trees):
    part = refine(*small_trees.values())
    for ref, b in part.block_of.items():
        t = part.trees[ref[0]]
        assert t.observe(ref[1]) == part.label[b]
        assert t.heights()[ref[1]] == part.height[b]


def test_chi_matrices(joint_example):
    a, b = joint_example
    part = refine(a, b)
    dark = part.block_of[(0, a.children(a.root)[2].child)]
    light = part.block_of[(0, a.children(a.root)[0].child)]
    q = F(1, 4)
    assert chi((0, a.root), part) == {(1, light): q, (2, light): q, (1, dark): q, (2, dark): q}
    assert chi((1, b.root), part) == {(2, dark): F(1, 2), (1, light): F(1, 2)}
    assert chi((0, a.children(a.root)[0].child), part) == {}


def test_delta_table(small_trees):
    for (x, y), want in DELTA_TABLE.items():
        assert delta(small_trees[x], small_trees[y]).value == want
        assert delta(small_trees[y], small_trees[x]).value == want
    for t in small_trees.values():
        assert delta(t, t).value == 0


def test_delta_on_joint_example(joint_example):
    r = delta(*joint_example)
    assert r.value == F(1, 4)
    assert r.witness.reevaluate() == r.value


def test_label_mismatch_is_one():
    r = delta(TimedTree.from_nested("a"), TimedTree.from_nested("b"))
    assert r.value == 1 and r.witness.kind == "label"


def test_delta_prime_structure(small_trees):
    eng = DeltaPrimeEngine()
    m = {(x, y): delta_prime(small_trees[x], small_trees[y], eng).value for x in NAMES for y in NAMES}
    for x in NAMES:
        assert m[x, x] == 0
        for y in NAMES:
            assert m[x, y] == m[y, x]
            assert 0 <= m[x, y] <= delta(small_trees[x], small_trees[y]).value
    assert m["T1", "T4"] == 0


def test_classmatch_dispatches_to_delta_prime(small_trees):
    t1, t2 = small_trees["T1"], small_trees["T2"]
    assert delta(t1, t2, ClassMatch()).value == delta_prime(t1, t2).value


def test_layered_aggregation_is_available(small_trees):
    eng = DeltaPrimeEngine("layers")
    v = delta_prime(small_trees["T1"], small_trees["T3"], eng).value
    assert 0 < v <= 1
    with pytest.raises(ValueError):
        DeltaPrimeEngine("bogus")


def test_time_rescaled_weights():
    a = TimedTree.from_nested(("x", [(1, 4, "x")]))
    b = TimedTree.from_nested(("x", [(F(1, 2), 4, "x"), (F(1, 2), 1, "x")]))
    r = delta(a, b, TimeRescale(lambda t: t / 4))
    assert r.value == F(1, 2)
    assert log_time(F(1, 2)) == 0 and log_time(F(1)) == 0
    assert delta(a, b, LogTime).value > 0
    with pytest.raises(ValueError):
        delta(a, b, TimeRescale(lambda t: -t))


def test_result_json(joint_example):
    doc = json.loads(delta(*joint_example).to_json())
    assert doc["value"] == "1/4" and doc["witness"]["kind"] == "entry"


def test_matrix_csv():
    text = matrix_csv(["a", "b"], [[F(0), F(1, 8)], [F(1, 8), F(0)]])
    rows = list(csv.reader(io.StringIO(text)))
    assert rows == [["", "a", "b"], ["a", "0", "1/8"], ["b", "1/8", "0"]]
    assert "0.125000" in matrix_csv(["a", "b"], [[F(0), F(1, 8)], [F(1, 8), F(0)]], decimal=True)


KEYS = [tuple(int(c) for c in f"{n:03b}") for n in range(8)]


def test_pt_secure_examples(agat, fagat):
    low = initial_env(fagat)
    v = pt_secure(fagat, None, low, [{"k": k} for k in KEYS])
    assert v.secure and v.max_delta == 0
    v = pt_secure(agat, None, initial_env(agat), [{"k": (0, 1, 1)}, {"k": (0, 1, 0)}])
    assert not v.secure and v.max_delta == 1 and v.worst_pair == (0, 1)
    plain = parse_program("l low int; h high int; l := l + 1")
    assert pt_secure(plain, None, None, [{"h": 0}, {"h": 5}]).secure
    with pytest.raises(ValueError):
        pt_secure(plain, None, None, [])
    with pytest.raises(ValueError):
        pt_secure(plain, None, None, [{"l": 3}])


# --------------------------------------------------------------------------
# properties


@settings(max_examples=300)
@given(tree_pairs())
def test_delta_zero_iff_bisimilar(pair):
    t1, t2 = pair
    r = delta(t1, t2)
    part = refine(t1, t2)
    assert (r.value == 0) == bisimilar(t1, t2) == part.same_block((0, t1.root), (1, t2.root))


@settings(max_examples=200)
@given(tree_pairs())
def test_delta_metric_properties(pair):
    t1, t2 = pair
    r, back = delta(t1, t2), delta(t2, t1)
    assert r.value == back.value
    assert 0 <= r.value <= 1
    assert delta(t1, t1).value == 0
    if r.witness is not None:
        assert r.witness.reevaluate() == r.value
    assert r.value == max(r.forward, r.backward)


@settings(max_examples=200)
@given(tree_pairs())
def test_delta_prime_bounded_by_delta(pair):
    t1, t2 = pair
    eng = DeltaPrimeEngine()
    dp = delta_prime(t1, t2, eng)
    assert dp.value == delta_prime(t2, t1, eng).value
    assert 0 <= dp.value <= delta(t1, t2).value
    if dp.witness is not None:
        assert dp.witness.reevaluate() == dp.value


@settings(max_examples=200)
@given(tree_pairs())
def test_chi_is_normalized(pair):
    part = refine(*pair)
    for ref in part.block_of:
        dist = chi(ref, part)
        if dist:
            assert sum(dist.values()) == 1 and all(0 < v <= 1 for v in dist.values())


def test_pairwise_values_all_distinct_pairs(small_trees):
    eng = DeltaPrimeEngine()
    for x, y in combinations(NAMES, 2):
        r = delta_prime(small_trees[x], small_trees[y], eng)
        if r.value:
            assert r.witness.reevaluate() == r.value
