"""Tree formation inside a small bank of protected registers.

A tree of depth ``d`` uses ``d`` consecutive registers ``V_1..V_d`` of a
bank; ``V_1`` ends up holding the root.  ``V_d`` collects the leaves of the
current lowest inner node, ``V_k`` for ``k < d`` holds the root of the
active (left, incomplete) subtree at depth ``k - 1``.  A leaf that
completes a node triggers merges upward as long as the completed node is
itself a last child; otherwise the completed subtree is shifted up into the
free register above it.

Bookkeeping beyond the registers is the leaf counter ``n`` and the level
index ``k``; the depth is fixed at construction.
"""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass, field
from typing import List, Optional

from .digest import Digest
from .registers import (
    NilMeasurementError,
    RegisterBank,
    RegisterError,
    Role,
    TreeFullError,
)
from .sml import Position, RecordKind, SmlRecord, SmlTree, digit


class InsufficientRegistersError(RegisterError):
    pass


class EmptyTreeError(RegisterError):
    pass


class BuilderState(enum.Enum):
    BUILDING = "building"
    FULL = "full"
    FINALIZED = "finalized"


class TreeBuilder:
    """Incremental tree formation over registers ``root .. root + depth - 1``."""

    def __init__(self, bank: RegisterBank, root: int, depth: int, arity: int = 2):
        if depth < 1:
            raise ValueError("tree depth must be at least 1")
        if arity < 2:
            raise ValueError("tree arity must be at least 2")
        if root < 0 or root + depth > len(bank):
            raise InsufficientRegistersError(
                f"depth {depth} at register {root} needs registers "
                f"{root}..{root + depth - 1}, bank has {len(bank)}"
            )
        self.bank = bank
        self.depth = depth
        self.arity = arity
        self.root = root
        self.slots = list(range(root, root + depth))
        for i in self.slots:
            if bank.registers[i].role is not Role.FREE:
                raise InsufficientRegistersError(f"register {i} is {bank.registers[i].role.value}")
        for i in self.slots:
            bank.pcr_reset(i)
            bank.set_role(i, Role.INTERMEDIATE)
        bank.set_role(root, Role.TREE_ROOT)
        self.n = 0
        self.k = depth
        self.state = BuilderState.BUILDING
        self.sml = SmlTree(bank.hash_alg, arity, depth)
        self.positions: List[Position] = []
        # M, S_V, S_m, V, E1, E2 as counted for a full tree; the root store is separate
        self.ops: Counter = Counter()

    @property
    def capacity(self) -> int:
        return self.arity**self.depth

    @property
    def active(self) -> bool:
        return self.state is BuilderState.BUILDING

    @property
    def root_value(self) -> Digest:
        return self.bank.slot_value(self.root)

    def _reg(self, k: int) -> int:
        return self.slots[k - 1]

    def value(self, k: int) -> Digest:
        return self.bank.slot_value(self._reg(k))

    def _write(self, value: Digest, kind: RecordKind, pos: Position, out: list) -> None:
        if kind is RecordKind.INNER and pos[0] == 0:
            kind = RecordKind.ROOT
        record = SmlRecord(value, kind)
        self.sml.append(record)
        self.positions.append(pos)
        out.append(record)
        if kind is RecordKind.LEAF:
            self.ops["S_m"] += 1
        elif kind is RecordKind.ROOT:
            self.ops["S_root"] += 1
        else:
            self.ops["S_V"] += 1

    def _merge(self, k: int) -> None:
        # V_k <- V_k ◇ V_{k+1}, then free V_{k+1}
        upper = self.value(k + 1)
        if upper is not None:
            self.bank.pcr_extend(self._reg(k), upper)
        self.bank.pcr_reset(self._reg(k + 1))

    def _shift(self, k: int) -> None:
        # V_k <- V_{k+1}, then free V_{k+1}
        self.bank.pcr_reset(self._reg(k))
        self._merge(k)

    def _node_position(self, k: int, n: int) -> Position:
        # node held by V_k that contains leaf position n
        return k - 1, n // self.arity ** (self.depth - k + 1)

    def _close(self, state: BuilderState) -> None:
        self.state = state
        for i in self.slots[1:]:
            self.bank.set_role(i, Role.FREE)
        self.bank.lock(self.root)

    def add_measurement(self, m: Digest) -> List[SmlRecord]:
        if self.state is not BuilderState.BUILDING:
            raise TreeFullError("tree full")
        if m is None:
            raise NilMeasurementError("measurement must not be nil")
        d, b, n = self.depth, self.arity, self.n
        top = b - 1
        out: List[SmlRecord] = []
        self._write(m, RecordKind.LEAF, (d, n), out)
        last = digit(n, d, d, b)
        if last == 0:
            self.bank.pcr_reset(self._reg(d))
            self.bank.pcr_extend(self._reg(d), m)
            self.ops["M"] += 1
        else:
            self.bank.pcr_extend(self._reg(d), m)
            self.ops["E1"] += 1
        if last == top:
            self._write(self.value(d), RecordKind.INNER, self._node_position(d, n), out)
            k = d - 1
            while k > 0 and digit(n, k, d, b) == top:
                self._merge(k)
                self.ops["E2"] += 1
                self._write(self.value(k), RecordKind.INNER, self._node_position(k, n), out)
                k -= 1
            self.k = k
            if k == 0:
                self.n = n + 1
                self._close(BuilderState.FULL)
                return out
            if digit(n, k, d, b) == 0:
                self._shift(k)
                self.ops["V"] += 1
            else:
                # middle child of a wider node: chain it on, no node completes
                self._merge(k)
                self.ops["E2"] += 1
        self.n = n + 1
        return out

    def finalize(self) -> List[SmlRecord]:
        """Complete a partially filled tree so that ``V_1`` holds the root.

        Absent right siblings are nil, so a lone child is forwarded upward
        unchanged.  Every forwarded or merged value is logged, including nil
        for subtrees that received no leaf.
        """
        if self.state is not BuilderState.BUILDING:
            raise TreeFullError(f"tree is already {self.state.value}")
        if self.n == 0:
            raise EmptyTreeError("cannot finalize a tree without leaves")
        d, n = self.depth, self.n
        out: List[SmlRecord] = []
        for k in range(d - 1, 0, -1):
            self.k = k
            if digit(n, k, d, self.arity) == 0:
                self._shift(k)
                self.ops["V"] += 1
            else:
                self._merge(k)
                self.ops["E2"] += 1
            self._write(self.value(k), RecordKind.INNER, self._node_position(k, n), out)
        if d == 1:
            self._write(self.value(1), RecordKind.ROOT, (0, 0), out)
        self._close(BuilderState.FINALIZED)
        return out

    def fallback_extend(self, m: Digest) -> List[SmlRecord]:
        """Chain a measurement linearly onto the exhausted root register."""
        if self.state is BuilderState.BUILDING:
            raise RegisterError("linear fallback only applies to an exhausted tree")
        if m is None:
            raise NilMeasurementError("measurement must not be nil")
        self.bank.unlock(self.root)
        try:
            self.bank.pcr_extend(self.root, m)
        finally:
            self.bank.lock(self.root)
        record = SmlRecord(m, RecordKind.LINEAR_FALLBACK)
        self.sml.append(record)
        return [record]


def build_tree(
    leaves: List[Digest],
    depth: int,
    arity: int = 2,
    bank: Optional[RegisterBank] = None,
    linear_fallback: bool = False,
    **bank_kwargs,
) -> TreeBuilder:
    """Form a complete log for ``leaves`` in a fresh bank (or the given one)."""
    if bank is None:
        bank = RegisterBank(max(depth, 1), **bank_kwargs)
    builder = bank.bind_tree(0, depth, arity)
    if not leaves:
        raise EmptyTreeError("no measurements")
    if len(leaves) > builder.capacity and not linear_fallback:
        raise TreeFullError(f"{len(leaves)} measurements exceed capacity {builder.capacity}")
    for m in leaves[: builder.capacity]:
        builder.add_measurement(m)
    if builder.active:
        builder.finalize()
    for m in leaves[builder.capacity:]:
        builder.fallback_extend(m)
    return builder


# -- capacity ---------------------------------------------------------------


def capacity(r: int, arity: int = 2) -> int:
    """Leaves held by the maximum-capacity forest over ``r`` registers."""
    if r < 1:
        raise ValueError("need at least one register")
    if arity == 2:
        return 2 ** (r + 1) - 2
    return sum(arity**k for k in range(1, r + 1))


@dataclass
class ForestPlan:
    registers: int
    depths: List[int]
    arity: int = 2
    # register that takes linear extends once every tree is full
    fallback_register: int = field(init=False)

    def __post_init__(self):
        self.fallback_register = self.registers - 1

    @property
    def capacity(self) -> int:
        return sum(self.arity**d for d in self.depths)


def plan_forest(r: int, arity: int = 2) -> ForestPlan:
    """Register ``i`` roots a tree of depth ``r - i``, using the rest as pipeline."""
    if r < 1:
        raise ValueError("need at least one register")
    return ForestPlan(r, list(range(r, 0, -1)), arity)


class Forest:
    """Fills the maximum-capacity forest tree by tree, then falls back to a chain."""

    def __init__(self, bank: RegisterBank, arity: int = 2):
        self.bank = bank
        self.plan = plan_forest(len(bank), arity)
        self.trees: List[TreeBuilder] = []
        self._next = 0

    def _current(self) -> Optional[TreeBuilder]:
        if self.trees and self.trees[-1].active:
            return self.trees[-1]
        if self._next < len(self.plan.depths):
            depth = self.plan.depths[self._next]
            builder = self.bank.bind_tree(self._next, depth, self.plan.arity)
            self._next += 1
            self.trees.append(builder)
            return builder
        return None

    def add(self, m: Digest) -> List[SmlRecord]:
        builder = self._current()
        if builder is None:
            return self.trees[-1].fallback_extend(m)
        return builder.add_measurement(m)

    def finalize(self) -> List[SmlTree]:
        if self.trees and self.trees[-1].active and self.trees[-1].n > 0:
            self.trees[-1].finalize()
        return [t.sml for t in self.trees if not t.active]


# -- formation cost ---------------------------------------------------------


def extend_count(d: int, arity: int = 2) -> int:
    """Two-operand extends needed to form a full tree: one less than a linear chain."""
    if d < 1:
        raise ValueError("depth must be at least 1")
    return arity**d - 1


def formation_cost_bound(d: int, E: float, S: float) -> float:
    """Coarse time bound ``2^d (E + 4.5 S) - (E + 4 S)`` for a full binary tree, d > 1."""
    if d <= 1:
        raise ValueError("the bound holds for depth > 1")
    if E < 0 or S < 0:
        raise ValueError("costs must be non-negative")
    return 2**d * (E + 4.5 * S) - (E + 4 * S)


def formation_cost(ops: Counter, E: float, S: float) -> float:
    """Instrumented cost; copies and leaf stores weigh twice a register store."""
    return E * (ops["E1"] + ops["E2"]) + S * (
        ops["M"] + ops["S_V"] + 2 * ops["S_m"] + 2 * ops["V"]
    )
