import json
import random

import pytest
from hypothesis import given, settings, strategies as st

from conftest import leaf_digests, named
from oracles import ancestors, sha1
from tfv.builder import build_tree
from tfv.sml import SmlRecord, expand_to_full, path_to_position, write_schedule
from tfv.validate import (
    NodeCase,
    NodeVerdict,
    Outcome,
    ShapeMismatchError,
    build_reference,
    classify,
    diagnostic_validate,
    linear_validate,
)

G, B = NodeVerdict.GOOD, NodeVerdict.BAD


def scenario(d, n, bad, seed=0, **kw):
    """Honest log over leaves with ``bad`` substituted; reference over the originals."""
    ref_leaves = leaf_digests(n, seed)
    rng = random.Random(seed + 1)
    actual = [rng.randbytes(20) if i in bad else m for i, m in enumerate(ref_leaves)]
    t = build_tree(actual, d, **kw)
    ref = build_reference(ref_leaves, d, **kw)
    return t, ref


def tamper(sml, index, value):
    sml.records[index] = SmlRecord(value, sml.records[index].kind)


class TestReference:
    def test_two_leaves(self):
        a, b = named("a", "b")
        assert build_reference([a, b], 1).root == sha1(a + b)

    def test_one_leaf(self):
        (a,) = named("a")
        assert build_reference([a], 1).root == a

    def test_six_leaf_matches_builder(self):
        leaves = named(*"abcdef")
        assert build_reference(leaves, 3).root == build_tree(leaves, 3).root_value

    def test_too_many(self):
        with pytest.raises(ValueError):
            build_reference(leaf_digests(5), 2)

    def test_internally_consistent(self):
        ref = build_reference(leaf_digests(11), 4)
        full = expand_to_full(build_tree(leaf_digests(11), 4).sml)
        assert ref.tree.levels == full.levels


class TestClassify:
    def test_case_a(self):
        assert classify(G, G, G) is NodeCase.A

    @pytest.mark.parametrize(
        "left,right,case",
        [(B, G, NodeCase.B_LEFT), (G, B, NodeCase.B_RIGHT), (B, B, NodeCase.B_BOTH)],
    )
    def test_cases_b(self, left, right, case):
        assert classify(B, left, right) is case

    @pytest.mark.parametrize("left,right", [(B, G), (G, B), (B, B)])
    def test_cases_c_good_parent(self, left, right):
        assert classify(G, left, right) is NodeCase.C_ANOMALY

    def test_case_c_bad_parent(self):
        assert classify(B, G, G) is NodeCase.C_BAD_PARENT_GOOD_CHILDREN

    def test_case_d(self):
        assert classify(B, B, None) is NodeCase.D_INCOMPLETE
        assert classify(G, G, None) is NodeCase.D_INCOMPLETE


class TestDiagnostic:
    def test_clean(self):
        t, ref = scenario(3, 8, set())
        r = diagnostic_validate(t.sml, t.root_value, ref)
        assert r.outcome is Outcome.CLEAN
        assert r.failed_leaves == set() and r.hash_op_count == 0 and r.comparison_count == 0

    def test_one_failed_leaf_depth2(self):
        t, ref = scenario(2, 4, {3})
        r = diagnostic_validate(t.sml, t.root_value, ref)
        assert r.failed_leaves == {3}
        assert r.hash_op_count == 2
        assert r.comparison_count == 4
        assert r.outcome is Outcome.FAILURES_FOUND

    def test_edited_inner_on_bad_path(self):
        t, ref = scenario(3, 8, {0, 6})
        sml = t.sml
        idx = write_schedule(8, 3).index((2, 0))
        tamper(sml, idx, bytes(20))
        r = diagnostic_validate(sml, t.root_value, ref)
        assert r.manipulation_exceptions == {(0,)}
        # the right half is still diagnosed
        assert r.failed_leaves == {6}
        assert r.outcome is Outcome.TAMPERED_AND_FAILURES

    def test_edited_inner_under_good_root(self):
        t, ref = scenario(3, 8, {0})
        idx = write_schedule(8, 3).index((2, 3))
        tamper(t.sml, idx, bytes(20))
        r = diagnostic_validate(t.sml, t.root_value, ref)
        assert r.manipulation_exceptions == {(1, 1)}
        assert r.failed_leaves == {0}
        r = diagnostic_validate(t.sml, t.root_value, ref, sweep=False)
        assert r.manipulation_exceptions == set()

    def test_bad_parent_good_children(self):
        t, ref = scenario(2, 4, set())
        idx = write_schedule(4, 2).index((1, 1))
        tamper(t.sml, idx, bytes(20))
        root_idx = len(t.sml.records) - 1
        forged_root = sha1(t.sml.records[2].digest + bytes(20))
        tamper(t.sml, root_idx, forged_root)
        r = diagnostic_validate(t.sml, forged_root, ref)
        # root recomputes fine, node R is bad over two good leaves
        assert r.manipulation_exceptions == {(1,)}
        assert r.hash_op_count == 1

    def test_register_mismatch_is_root_exception(self):
        t, ref = scenario(3, 8, set())
        r = diagnostic_validate(t.sml, bytes(20), ref)
        assert r.manipulation_exceptions == {()}
        assert r.outcome is Outcome.TAMPERED

    def test_incomplete_forwarding(self):
        t, ref = scenario(3, 5, {4})
        r = diagnostic_validate(t.sml, t.root_value, ref)
        assert r.failed_leaves == {4}
        assert r.manipulation_exceptions == set()

    def test_incomplete_forward_mismatch(self):
        t, ref = scenario(3, 6, set())
        # entry 11 forwards entry 10; break the copy
        tamper(t.sml, 10, bytes(20))
        forged = sha1(t.sml.records[6].digest + bytes(20))
        tamper(t.sml, 11, forged)
        r = diagnostic_validate(t.sml, forged, ref)
        assert r.manipulation_exceptions == {(1,)}

    def test_shape_mismatch(self):
        t, _ = scenario(3, 8, set())
        with pytest.raises(ShapeMismatchError):
            diagnostic_validate(t.sml, t.root_value, build_reference(leaf_digests(4), 2))

    def test_names_in_report(self):
        ref_leaves = leaf_digests(4)
        actual = list(ref_leaves)
        actual[2] = bytes(20)
        t = build_tree(actual, 2)
        ref = build_reference(ref_leaves, 2, names=["bios", "loader", "kernel", "initrd"])
        r = diagnostic_validate(t.sml, t.root_value, ref)
        d = json.loads(r.to_json())
        assert d["failed_components"] == ["kernel"]
        assert d["outcome"] == "failures_found"

    def test_linear_fallback_chain(self):
        ref_leaves = leaf_digests(6)
        t = build_tree(ref_leaves, 2, linear_fallback=True)
        ref = build_reference(ref_leaves[:4], 2)
        reg = t.bank.pcr_read(0)
        assert diagnostic_validate(t.sml, reg, ref).outcome is Outcome.CLEAN
        tamper(t.sml, len(t.sml.records) - 1, bytes(20))
        assert diagnostic_validate(t.sml, reg, ref).manipulation_exceptions == {()}

    def test_strict_mode(self):
        t, ref = scenario(3, 7, {2, 6}, strict_tpm=True)
        r = diagnostic_validate(t.sml, t.root_value, ref)
        assert r.failed_leaves == {2, 6} and not r.manipulation_exceptions

    def test_forensic_mode_is_separate(self):
        t, ref = scenario(3, 8, {0, 1})
        tamper(t.sml, write_schedule(8, 3).index((2, 0)), bytes(20))
        r = diagnostic_validate(t.sml, t.root_value, ref, forensic=True)
        assert r.manipulation_exceptions == {(0,)}
        assert r.failed_leaves == set()
        assert r.forensic_leaves == {0, 1}

    def test_wide_tree(self):
        t, ref = scenario(2, 9, {4}, arity=3)
        r = diagnostic_validate(t.sml, t.root_value, ref)
        assert r.failed_leaves == {4}
        assert r.comparison_count == 6


@st.composite
def bad_sets(draw, min_d=1, max_d=7, full=False):
    d = draw(st.integers(min_d, max_d))
    n = 2**d if full else draw(st.integers(1, 2**d))
    bad = draw(st.sets(st.integers(0, n - 1), max_size=n))
    return d, n, bad, draw(st.integers(0, 1000))


@settings(max_examples=120, deadline=None)
@given(bad_sets())
def test_completeness_and_soundness(case):
    d, n, bad, seed = case
    t, ref = scenario(d, n, bad, seed)
    r = diagnostic_validate(t.sml, t.root_value, ref)
    assert r.failed_leaves == bad
    assert r.manipulation_exceptions == set()


@settings(max_examples=80, deadline=None)
@given(bad_sets(full=True))
def test_hash_count_full_tree(case):
    d, n, bad, seed = case
    t, ref = scenario(d, n, bad, seed)
    r = diagnostic_validate(t.sml, t.root_value, ref)
    inner = set().union(*(ancestors(i, d) for i in bad)) if bad else set()
    assert r.hash_op_count == len(inner)
    assert r.comparison_count == 2 * len(inner)


@settings(max_examples=80, deadline=None)
@given(bad_sets())
def test_pruning_safety(case):
    d, n, bad, seed = case
    t, ref = scenario(d, n, bad, seed)
    r = diagnostic_validate(t.sml, t.root_value, ref)
    full = expand_to_full(t.sml)
    for pos in r.visited:
        assert full[pos] != ref.tree[pos]


@settings(max_examples=120, deadline=None)
@given(bad_sets(min_d=2, max_d=6), st.data())
def test_exception_locality(case, data):
    d, n, bad, seed = case
    t, ref = scenario(d, n, bad, seed)
    schedule = write_schedule(n, d)
    inner = [i for i, p in enumerate(schedule) if 0 < p[0] < d]
    if not inner:
        return
    idx = data.draw(st.sampled_from(inner))
    old = t.sml.records[idx].digest
    new = random.Random(idx).randbytes(20)
    if old == new:
        return
    tamper(t.sml, idx, new)
    r = diagnostic_validate(t.sml, t.root_value, ref)
    level, index = schedule[idx]
    lineage = {(lv, index // 2 ** (level - lv)) for lv in range(level + 1)}
    assert len(r.manipulation_exceptions) == 1
    (exc,) = r.manipulation_exceptions
    assert path_to_position(exc) in lineage


class TestLinear:
    def test_empty(self):
        z = bytes(20)
        assert linear_validate([], z, z).verdict

    def test_single(self):
        z = bytes(20)
        (m,) = named("m")
        assert linear_validate([m], sha1(z + m), z).verdict
        assert not linear_validate([m], m, z).verdict

    def test_tamper_breaks_without_localisation(self):
        z = bytes(20)
        ms = leaf_digests(16)
        final = z
        for m in ms:
            final = sha1(final + m)
        ok = linear_validate(ms, final, z, reference=ms)
        assert ok.verdict and ok.failed_indices == [] and ok.hash_op_count == 16
        forged = list(ms)
        forged[5] = bytes(20)
        res = linear_validate(forged, final, z, reference=ms)
        assert not res.verdict and res.failed_indices == []
