import pytest
from hypothesis import given, settings, strategies as st

from conftest import leaf_digests, named
from oracles import merkle_root, sha1
from tfv.builder import (
    BuilderState,
    EmptyTreeError,
    Forest,
    InsufficientRegistersError,
    TreeBuilder,
    build_tree,
    capacity,
    extend_count,
    formation_cost,
    formation_cost_bound,
    plan_forest,
)
from tfv.digest import HashAlgorithm
from tfv.registers import RegisterBank, Role, TreeFullError
from tfv.sml import RecordKind, write_schedule


@st.composite
def shapes(draw, max_depth=6, arities=(2,)):
    b = draw(st.sampled_from(arities))
    d = draw(st.integers(1, max_depth))
    n = draw(st.integers(1, b**d))
    seed = draw(st.integers(0, 2**16))
    return b, d, n, seed


def test_six_leaf_order():
    a, b, c, d, e, f = named(*"abcdef")
    ab, cd, ef = sha1(a + b), sha1(c + d), sha1(e + f)
    abcd = sha1(ab + cd)
    root = sha1(abcd + ef)
    log = build_tree([a, b, c, d, e, f], 3).sml
    assert [r.digest for r in log.records] == [a, b, ab, c, d, cd, abcd, e, f, ef, ef, root]
    assert log.records[9].digest == log.records[10].digest
    assert log.records[-1].kind is RecordKind.ROOT


def test_depth2_full():
    a, b, c, e = named("a", "b", "c", "e")
    t = build_tree([a, b, c, e], 2)
    assert t.root_value == sha1(sha1(a + b) + sha1(c + e))
    assert len(t.sml.records) == 7
    assert t.state is BuilderState.FULL


def test_single_leaf_depth2():
    (a,) = named("a")
    t = build_tree([a], 2)
    assert t.root_value == a
    assert [r.digest for r in t.sml.records] == [a, a]


def test_finalize_three_of_four():
    a, b, c = named("a", "b", "c")
    assert build_tree([a, b, c], 2).root_value == sha1(sha1(a + b) + c)


def test_finalize_two_of_four():
    a, b = named("a", "b")
    t = build_tree([a, b], 2)
    assert t.root_value == sha1(a + b)
    assert [r.digest for r in t.sml.records] == [a, b, sha1(a + b), sha1(a + b)]


def test_new_builder_resets_slots():
    bank = RegisterBank(3)
    for i in range(3):
        bank.pcr_extend(i, named("junk")[0])
    t = TreeBuilder(bank, 0, 3)
    assert [bank.pcr_read(i) for i in range(3)] == [None, None, None]
    assert t.n == 0 and t.state is BuilderState.BUILDING
    assert TreeBuilder(RegisterBank(1), 0, 1).capacity == 2


def test_bad_builders():
    with pytest.raises(ValueError):
        TreeBuilder(RegisterBank(2), 0, 0)
    with pytest.raises(InsufficientRegistersError):
        TreeBuilder(RegisterBank(2), 0, 3)
    with pytest.raises(ValueError):
        TreeBuilder(RegisterBank(2), 0, 2, arity=1)


def test_finalize_errors():
    t = TreeBuilder(RegisterBank(2), 0, 2)
    with pytest.raises(EmptyTreeError):
        t.finalize()
    full = build_tree(named(*"ab"), 1)
    with pytest.raises(TreeFullError):
        full.finalize()
    with pytest.raises(TreeFullError):
        full.add_measurement(named("c")[0])


@settings(max_examples=150, deadline=None)
@given(shapes(max_depth=6, arities=(2, 3, 4)))
def test_root_matches_oracle(shape):
    b, d, n, seed = shape
    if b**d > 1024:
        d = 3
        n = min(n, b**d)
    leaves = leaf_digests(n, seed)
    t = build_tree(leaves, d, b)
    assert t.root_value == merkle_root(leaves, d, b)
    assert t.positions == write_schedule(n, d, b)
    assert t.sml.records[-1].kind is RecordKind.ROOT


@settings(max_examples=60, deadline=None)
@given(shapes(max_depth=5))
def test_strict_mode_matches_zero_start_oracle(shape):
    b, d, n, seed = shape
    leaves = leaf_digests(n, seed)
    t = build_tree(leaves, d, b, strict_tpm=True)
    assert t.root_value == merkle_root(leaves, d, b, strict=True)
    if n > 1:
        assert t.root_value != merkle_root(leaves, d, b)


@pytest.mark.parametrize("d", range(1, 8))
def test_full_tree_record_count(d):
    t = build_tree(leaf_digests(2**d, d), d)
    assert len(t.sml.records) == 2 ** (d + 1) - 1


@settings(max_examples=60, deadline=None)
@given(shapes(max_depth=5))
def test_register_discipline(shape):
    _, d, n, seed = shape
    leaves = leaf_digests(n, seed)
    bank = RegisterBank(d)
    t = bank.bind_tree(0, d)
    for i, m in enumerate(leaves):
        t.add_measurement(m)
        if not t.active:
            break
        done = i + 1
        for j in range(1, d):
            v = t.value(j)
            # V_j: nil or the root of a finished subtree of height d - j
            width = 2 ** (d - j)
            finished = {
                merkle_root(leaves[s:s + width], d - j)
                for s in range(0, done - width + 1, width)
            }
            assert v is None or v in finished


def test_binary_arity_path_equals_generic_digit_test():
    # the generic digit test with b = 2 is the binary test
    for d in range(1, 6):
        for n in range(1, 2**d + 1):
            leaves = leaf_digests(n, n)
            assert build_tree(leaves, d, 2).sml.records == build_tree(leaves, d, arity=2).sml.records


@pytest.mark.parametrize("d", range(1, 11))
def test_extend_count_instrumented(d):
    t = build_tree(leaf_digests(2**d, d), d)
    assert t.bank.extend_count == extend_count(d) == 2**d - 1
    linear = RegisterBank(1, strict_tpm=True)
    for m in leaf_digests(2**d, d):
        linear.pcr_extend(0, m)
    assert linear.extend_count - t.bank.extend_count == 1


def test_extend_count_examples():
    assert extend_count(1) == 1
    assert extend_count(3) == 7


def test_capacity():
    assert capacity(24) == 33_554_430
    assert capacity(16) == 131_070
    assert capacity(1) == 2
    assert capacity(3, arity=3) == 3 + 9 + 27


def test_plan_forest():
    p = plan_forest(3)
    assert p.depths == [3, 2, 1] and p.capacity == 14 == capacity(3)
    assert plan_forest(1).depths == [1]
    big = plan_forest(24)
    assert len(big.depths) == 24 and big.capacity == 33_554_430
    assert p.fallback_register == 2


def test_formation_cost_bound_examples():
    assert formation_cost_bound(3, 1, 0) == 7
    assert formation_cost_bound(2, 0, 1) == 14
    with pytest.raises(ValueError):
        formation_cost_bound(1, 1, 1)


@pytest.mark.parametrize("d", [2, 3, 4, 6])
def test_instrumented_counts_within_bound(d):
    t = build_tree(leaf_digests(2**d, 7), d)
    ops = t.ops
    assert ops["S_m"] == 2**d
    assert ops["M"] == ops["E1"] == 2 ** (d - 1)
    assert ops["V"] == ops["E2"] == 2 ** (d - 1) - 1
    assert ops["S_V"] == 2**d - 2 and ops["S_root"] == 1
    for E, S in [(1, 0), (0, 1), (1, 1), (3.5, 0.25)]:
        assert formation_cost(ops, E, S) <= formation_cost_bound(d, E, S) + 1e-9


def test_forest_fills_plan_then_falls_back():
    bank = RegisterBank(3)
    forest = Forest(bank)
    leaves = leaf_digests(14 + 3, 99)
    for m in leaves:
        forest.add(m)
    logs = forest.finalize()
    assert [lg.depth for lg in logs] == [3, 2, 1]
    assert bank.pcr_read(0) == merkle_root(leaves[:8], 3)
    assert bank.pcr_read(1) == merkle_root(leaves[8:12], 2)
    tail_root = merkle_root(leaves[12:14], 1)
    acc = tail_root
    for m in leaves[14:]:
        acc = sha1(acc + m)
    assert bank.pcr_read(2) == acc
    assert [r.kind for r in logs[-1].records[-3:]] == [RecordKind.LINEAR_FALLBACK] * 3
    assert all(r.role is Role.LOCKED for r in bank.registers)


def test_forest_partial_last_tree():
    bank = RegisterBank(3)
    forest = Forest(bank)
    leaves = leaf_digests(10, 5)
    for m in leaves:
        forest.add(m)
    logs = forest.finalize()
    assert len(logs) == 2
    assert bank.pcr_read(1) == merkle_root(leaves[8:], 2)


def test_build_tree_capacity_guard():
    with pytest.raises(TreeFullError):
        build_tree(leaf_digests(5), 2)
    t = build_tree(leaf_digests(6), 2, linear_fallback=True)
    assert len(t.sml.fallback_records) == 2


def test_sha256_tree():
    alg = HashAlgorithm.SHA256
    import hashlib

    leaves = leaf_digests(5, 3, alg)
    t = build_tree(leaves, 3, hash_alg=alg)
    assert t.root_value == merkle_root(leaves, 3, H=lambda x: hashlib.sha256(x).digest())
