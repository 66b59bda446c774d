"""Diagnostic validation of a tree-formed log against a reference tree.

The traversal starts at the root and only descends into nodes that differ
from the reference.  At a bad node both children are compared with the
reference; if some child is bad the parent is recomputed from the logged
children, and a mismatch marks the subtree as manipulated.  A bad parent
over good children cannot be authentic and is flagged without hashing.

Subtrees whose root agrees with the reference are pruned from the
diagnostic traversal.  A separate comparison-only sweep (no hashing) then
checks the logged records inside those subtrees against the reference,
so that an edited record below an authentic root is still reported.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set

from .digest import DEFAULT_ALG, Digest, HashAlgorithm, chain, combine
from .sml import (
    EdgePath,
    FullTree,
    Position,
    SmlTree,
    empty_full_tree,
    expand_to_full,
    format_path,
    position_to_path,
)


class ShapeMismatchError(ValueError):
    pass


class NodeVerdict(enum.Enum):
    GOOD = "g"
    BAD = "b"


class NodeCase(enum.Enum):
    A = "a"
    B_LEFT = "b_left"
    B_RIGHT = "b_right"
    B_BOTH = "b_both"
    C_ANOMALY = "c_anomaly"
    C_BAD_PARENT_GOOD_CHILDREN = "c_bad_parent_good_children"
    D_INCOMPLETE = "d_incomplete"


class Outcome(enum.Enum):
    CLEAN = "clean"
    FAILURES_FOUND = "failures_found"
    TAMPERED = "tampered"
    TAMPERED_AND_FAILURES = "tampered_and_failures"


def classify(
    parent: NodeVerdict,
    left: Optional[NodeVerdict],
    right: Optional[NodeVerdict],
) -> NodeCase:
    """Binary node configuration; ``None`` stands for a nil child."""
    if right is None:
        return NodeCase.D_INCOMPLETE
    g, b = NodeVerdict.GOOD, NodeVerdict.BAD
    if parent is g:
        return NodeCase.A if left is g and right is g else NodeCase.C_ANOMALY
    if left is g and right is g:
        return NodeCase.C_BAD_PARENT_GOOD_CHILDREN
    if left is b and right is b:
        return NodeCase.B_BOTH
    return NodeCase.B_LEFT if left is b else NodeCase.B_RIGHT


@dataclass
class ReferenceTree:
    tree: FullTree
    hash_alg: HashAlgorithm = DEFAULT_ALG
    strict_tpm: bool = False
    leaf_count: int = 0
    names: Optional[List[str]] = None

    @property
    def depth(self) -> int:
        return self.tree.depth

    @property
    def arity(self) -> int:
        return self.tree.arity

    @property
    def root(self) -> Digest:
        return self.tree.root

    def name(self, leaf: int) -> str:
        if self.names and leaf < len(self.names):
            return self.names[leaf]
        return str(leaf)


def build_reference(
    leaves: Sequence[Digest],
    depth: int,
    arity: int = 2,
    hash_alg: HashAlgorithm = DEFAULT_ALG,
    strict_tpm: bool = False,
    names: Optional[Sequence[str]] = None,
) -> ReferenceTree:
    """Full tree over ``leaves`` padded with nil, built level by level."""
    if depth < 1:
        raise ValueError("depth must be at least 1")
    if not 1 <= len(leaves) <= arity**depth:
        raise ValueError(f"{len(leaves)} leaves do not fit a depth-{depth} tree")
    tree = empty_full_tree(depth, arity)
    tree.levels[depth][: len(leaves)] = list(leaves)
    for level in range(depth - 1, -1, -1):
        below = tree.levels[level + 1]
        tree.levels[level] = [
            combine(below[i * arity:(i + 1) * arity], hash_alg, strict_tpm)
            for i in range(arity**level)
        ]
    return ReferenceTree(tree, hash_alg, strict_tpm, len(leaves), list(names) if names else None)


@dataclass
class ValidationReport:
    failed_leaves: Set[int] = field(default_factory=set)
    manipulation_exceptions: Set[EdgePath] = field(default_factory=set)
    hash_op_count: int = 0
    comparison_count: int = 0
    sweep_comparison_count: int = 0
    arity: int = 2
    # diagnostic traversal order, for instrumentation
    visited: List[Position] = field(default_factory=list)
    # leaves reached inside excepted subtrees in forensic mode; carry no trust
    forensic_leaves: Set[int] = field(default_factory=set)
    names: Dict[int, str] = field(default_factory=dict)

    @property
    def outcome(self) -> Outcome:
        if self.manipulation_exceptions and self.failed_leaves:
            return Outcome.TAMPERED_AND_FAILURES
        if self.manipulation_exceptions:
            return Outcome.TAMPERED
        if self.failed_leaves:
            return Outcome.FAILURES_FOUND
        return Outcome.CLEAN

    @property
    def failed_components(self) -> List[str]:
        return [self.names.get(i, str(i)) for i in sorted(self.failed_leaves)]

    def exception_paths(self) -> List[str]:
        return sorted(format_path(p, self.arity) for p in self.manipulation_exceptions)

    def to_dict(self) -> dict:
        out = {
            "outcome": self.outcome.value,
            "failed_leaves": sorted(self.failed_leaves),
            "failed_components": self.failed_components,
            "exceptions": self.exception_paths(),
            "hash_op_count": self.hash_op_count,
            "comparison_count": self.comparison_count,
            "sweep_comparison_count": self.sweep_comparison_count,
        }
        if self.forensic_leaves:
            out["forensic_leaves"] = sorted(self.forensic_leaves)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _hashes_needed(children: Sequence[Digest], strict_tpm: bool) -> bool:
    present = sum(c is not None for c in children)
    return present >= 2 or (strict_tpm and present >= 1)


def diagnostic_validate(
    sml: SmlTree,
    root_register_value: Digest,
    ref: ReferenceTree,
    sweep: bool = True,
    forensic: bool = False,
) -> ValidationReport:
    if (sml.depth, sml.arity, sml.hash_alg) != (ref.depth, ref.arity, ref.hash_alg):
        raise ShapeMismatchError(
            f"log is d={sml.depth} b={sml.arity} {sml.hash_alg.name}, reference is "
            f"d={ref.depth} b={ref.arity} {ref.hash_alg.name}"
        )
    strict = ref.strict_tpm
    report = ValidationReport(arity=ref.arity)
    if ref.names:
        report.names = dict(enumerate(ref.names))
    tree = expand_to_full(sml, strict)
    refs = ref.tree

    # The register vouches for the logged root, possibly through a fallback chain.
    claimed = chain((r.digest for r in sml.fallback_records), tree.root, sml.hash_alg)
    if claimed != root_register_value:
        report.manipulation_exceptions.add(())
        return report
    if tree.root == refs.root:
        if sweep:
            _sweep(tree, refs, (0, 0), report)
        return report

    pruned: List[Position] = []
    stack: List[Position] = [(0, 0)]
    while stack:
        pos = stack.pop()
        report.visited.append(pos)
        kids = tree.children(pos)
        if not kids:
            report.failed_leaves.add(pos[1])
            continue
        values = [tree[c] for c in kids]
        report.comparison_count += len(kids)
        bad = [c for c, v in zip(kids, values) if v != refs[c]]
        good = [c for c, v in zip(kids, values) if v == refs[c]]
        if not bad:
            # bad parent over good children: no authentic configuration
            report.manipulation_exceptions.add(position_to_path(pos, tree.arity))
            continue
        if _hashes_needed(values, strict):
            report.hash_op_count += 1
        if combine(values, sml.hash_alg, strict) != tree[pos]:
            report.manipulation_exceptions.add(position_to_path(pos, tree.arity))
            if forensic:
                _forensic(tree, refs, bad, report)
            continue
        pruned.extend(good)
        stack.extend(reversed(bad))

    if sweep:
        for pos in pruned:
            _sweep(tree, refs, pos, report)
    return report


def _sweep(tree: FullTree, refs: FullTree, start: Position, report: ValidationReport) -> None:
    stack = [start]
    while stack:
        pos = stack.pop()
        level, index = pos
        if tree.written[level][index]:
            report.sweep_comparison_count += 1
            if tree[pos] != refs[pos]:
                report.manipulation_exceptions.add(position_to_path(pos, tree.arity))
                continue
        stack.extend(tree.children(pos))


def _forensic(tree: FullTree, refs: FullTree, start: List[Position], report) -> None:
    stack = list(start)
    while stack:
        pos = stack.pop()
        kids = tree.children(pos)
        if not kids:
            report.forensic_leaves.add(pos[1])
            continue
        stack.extend(c for c in kids if tree[c] != refs[c])


@dataclass
class LinearResult:
    verdict: bool
    hash_op_count: int
    comparison_count: int
    # only meaningful when the chain verified
    failed_indices: List[int] = field(default_factory=list)


def linear_validate(
    measurements: Sequence[Digest],
    claimed_final: Digest,
    initial: Digest,
    hash_alg: HashAlgorithm = DEFAULT_ALG,
    reference: Optional[Sequence[Digest]] = None,
) -> LinearResult:
    """Baseline: recompute the whole hash chain, then compare measurements.

    A broken chain yields no per-measurement diagnosis, since any entry of
    the log could have been forged to hide the one that broke it.
    """
    value = initial
    hashes = 0
    for m in measurements:
        if value is not None and m is not None:
            hashes += 1
        value = chain([m], value, hash_alg)
    ok = value == claimed_final
    comparisons = 1
    failed: List[int] = []
    if ok and reference is not None:
        for i, (m, r) in enumerate(zip(measurements, reference)):
            comparisons += 1
            if m != r:
                failed.append(i)
    return LinearResult(ok, hashes, comparisons, failed)
