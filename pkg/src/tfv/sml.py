"""Tree-formed stored measurement log.

Records are kept in the order the tree builder writes them, which for a
full tree is the post-order serialization of the tree (children left to
right, then parent, root last).  Incomplete trees are stored compactly;
their positions in the full tree are recovered from the write schedule,
which depends only on the leaf count, depth and arity.

File layout (all integers big-endian)::

    magic      4s   b"TFVS"
    version    B    0x01
    hash_alg   B    0x01 SHA-1, 0x02 SHA-256
    arity      B
    depth      B
    leaves     I
    records    I
    record*    B flags (bit0 nil, bit1 leaf, bit2 root, bit3 linear fallback)
               followed by the digest iff the nil bit is clear
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence, Tuple

from .digest import Digest, HashAlgorithm, check_digest, combine

MAGIC = b"TFVS"
VERSION = 0x01
_HEADER = struct.Struct(">4sBBBBII")

FLAG_NIL = 0x01
FLAG_LEAF = 0x02
FLAG_ROOT = 0x04
FLAG_FALLBACK = 0x08

Position = Tuple[int, int]  # (depth from root, index within that depth)
EdgePath = Tuple[int, ...]  # branch taken at each level, 0 = leftmost


class SmlError(ValueError):
    pass


class SealedLogError(SmlError):
    pass


class MalformedLogError(SmlError):
    pass


class BadMagicError(MalformedLogError):
    pass


class UnsupportedVersionError(MalformedLogError):
    pass


class TruncatedLogError(MalformedLogError):
    pass


class DigestLengthError(MalformedLogError):
    pass


class RecordKind(enum.Enum):
    LEAF = "leaf"
    INNER = "inner"
    ROOT = "root"
    LINEAR_FALLBACK = "linear_fallback"


@dataclass(frozen=True)
class SmlRecord:
    digest: Digest
    kind: RecordKind = RecordKind.INNER

    @property
    def nil_marker(self) -> bool:
        return self.digest is None

    @property
    def flags(self) -> int:
        bits = FLAG_NIL if self.digest is None else 0
        bits |= {
            RecordKind.LEAF: FLAG_LEAF,
            RecordKind.ROOT: FLAG_ROOT,
            RecordKind.LINEAR_FALLBACK: FLAG_FALLBACK,
            RecordKind.INNER: 0,
        }[self.kind]
        return bits


@dataclass
class SmlTree:
    hash_alg: HashAlgorithm
    arity: int
    depth: int
    leaf_count: int = 0
    records: List[SmlRecord] = field(default_factory=list)

    @property
    def sealed(self) -> bool:
        return any(r.kind is RecordKind.ROOT for r in self.records)

    @property
    def root(self) -> Digest:
        for r in self.records:
            if r.kind is RecordKind.ROOT:
                return r.digest
        raise SmlError("log has no root record")

    @property
    def tree_records(self) -> List[SmlRecord]:
        return [r for r in self.records if r.kind is not RecordKind.LINEAR_FALLBACK]

    @property
    def fallback_records(self) -> List[SmlRecord]:
        return [r for r in self.records if r.kind is RecordKind.LINEAR_FALLBACK]

    @property
    def leaves(self) -> List[Digest]:
        return [r.digest for r in self.records if r.kind is RecordKind.LEAF]

    def append(self, record: SmlRecord) -> None:
        # Only linear-fallback records may follow the root.
        if self.sealed and record.kind is not RecordKind.LINEAR_FALLBACK:
            raise SealedLogError("log is sealed by its root record")
        if record.kind is RecordKind.LINEAR_FALLBACK and not self.sealed:
            raise SmlError("linear fallback records require a finished tree")
        check_digest(record.digest, self.hash_alg)
        if record.kind is RecordKind.LEAF:
            if record.digest is None:
                raise SmlError("leaf records cannot be nil")
            self.leaf_count += 1
        self.records.append(record)


# -- full-tree geometry -----------------------------------------------------


def full_size(depth: int, arity: int = 2) -> int:
    """Number of nodes in a full tree of the given depth."""
    return (arity ** (depth + 1) - 1) // (arity - 1)


def digit(n: int, k: int, depth: int, arity: int = 2) -> int:
    """k-th base-``arity`` digit of ``n`` counted from the most significant, k = 1..depth."""
    return (n // arity ** (depth - k)) % arity


def write_schedule(leaf_count: int, depth: int, arity: int = 2) -> List[Position]:
    """Full-tree positions of the records a builder writes for ``leaf_count`` leaves.

    Derived from the formation and cleanup loops alone, without hashing,
    so it can place the records of a compact log.
    """
    if depth < 1 or arity < 2:
        raise SmlError("depth must be >= 1 and arity >= 2")
    if not 1 <= leaf_count <= arity**depth:
        raise SmlError(f"leaf count {leaf_count} outside 1..{arity ** depth}")
    out: List[Position] = []
    top = arity - 1
    for i in range(leaf_count):
        out.append((depth, i))
        if digit(i, depth, depth, arity) != top:
            continue
        out.append((depth - 1, i // arity))
        k = depth - 1
        while k > 0 and digit(i, k, depth, arity) == top:
            out.append((k - 1, i // arity ** (depth - k + 1)))
            k -= 1
    if leaf_count < arity**depth:
        for k in range(depth - 1, 0, -1):
            out.append((k - 1, leaf_count // arity ** (depth - k + 1)))
        if depth == 1:
            out.append((0, 0))
    return out


def locate(depth: int, K: int, arity: int = 2) -> EdgePath:
    """Edge path from the root to the node at 1-based serialization index K.

    The root is the last entry; the remaining entries split into ``arity``
    equal blocks, one per child subtree, and the search recurses until K is
    the last element of its block.
    """
    if not 1 <= K <= full_size(depth, arity):
        raise SmlError(f"index {K} outside 1..{full_size(depth, arity)}")
    path = []
    h = depth
    while K != full_size(h, arity):
        block = full_size(h - 1, arity)
        branch = (K - 1) // block
        path.append(branch)
        K -= branch * block
        h -= 1
    return tuple(path)


def path_to_position(path: Sequence[int], arity: int = 2) -> Position:
    index = 0
    for branch in path:
        index = index * arity + branch
    return len(path), index


def position_to_path(pos: Position, arity: int = 2) -> EdgePath:
    level, index = pos
    path = []
    for _ in range(level):
        index, branch = divmod(index, arity)
        path.append(branch)
    return tuple(reversed(path))


def format_path(path: Sequence[int], arity: int = 2) -> str:
    if arity == 2:
        return "".join("LR"[b] for b in path)
    return ".".join(str(b) for b in path)


def parse_path(text: str, arity: int = 2) -> EdgePath:
    text = text.strip()
    if text in ("", "root"):
        return ()
    if arity == 2 and set(text.upper()) <= {"L", "R"}:
        return tuple(0 if c == "L" else 1 for c in text.upper())
    path = tuple(int(p) for p in text.split("."))
    if any(not 0 <= b < arity for b in path):
        raise SmlError(f"bad edge path {text!r} for arity {arity}")
    return path


@dataclass
class FullTree:
    """Every position of a full tree; ``levels[0]`` is the root level."""

    depth: int
    arity: int
    levels: List[List[Digest]]
    written: List[List[bool]]
    # record index in the log for each written position
    record_index: dict = field(default_factory=dict)

    @property
    def root(self) -> Digest:
        return self.levels[0][0]

    def __getitem__(self, pos: Position) -> Digest:
        level, index = pos
        return self.levels[level][index]

    def children(self, pos: Position) -> List[Position]:
        level, index = pos
        if level == self.depth:
            return []
        return [(level + 1, index * self.arity + j) for j in range(self.arity)]

    def postorder(self) -> Iterator[Position]:
        def walk(pos):
            for c in self.children(pos):
                yield from walk(c)
            yield pos

        return walk((0, 0))


def node_at(tree: FullTree, path: Sequence[int]) -> Digest:
    return tree[path_to_position(path, tree.arity)]


def empty_full_tree(depth: int, arity: int) -> FullTree:
    levels = [[None] * arity**lv for lv in range(depth + 1)]
    written = [[False] * arity**lv for lv in range(depth + 1)]
    return FullTree(depth, arity, levels, written)


def fill_inner(tree: FullTree, hash_alg: HashAlgorithm, strict_tpm: bool = False) -> None:
    """Complete positions never written, bottom-up, under the nil convention."""
    for level in range(tree.depth - 1, -1, -1):
        row = tree.levels[level]
        below = tree.levels[level + 1]
        b = tree.arity
        for i in range(len(row)):
            if not tree.written[level][i]:
                row[i] = combine(below[i * b:(i + 1) * b], hash_alg, strict_tpm)


def expand_to_full(sml: SmlTree, strict_tpm: bool = False) -> FullTree:
    """Place every tree record at its full-tree position.

    Positions the builder never wrote hold the nil-completed value of their
    children, which is nil wherever no leaf lies below.
    """
    tree_records = [
        (i, r) for i, r in enumerate(sml.records) if r.kind is not RecordKind.LINEAR_FALLBACK
    ]
    try:
        schedule = write_schedule(sml.leaf_count, sml.depth, sml.arity)
    except SmlError as exc:
        raise MalformedLogError(str(exc)) from None
    if len(schedule) != len(tree_records):
        raise MalformedLogError(
            f"{len(tree_records)} tree records, expected {len(schedule)} for "
            f"n={sml.leaf_count}, d={sml.depth}, b={sml.arity}"
        )
    tree = empty_full_tree(sml.depth, sml.arity)
    for (idx, record), (level, index) in zip(tree_records, schedule):
        is_leaf = level == sml.depth
        if is_leaf != (record.kind is RecordKind.LEAF):
            raise MalformedLogError(f"record {idx} has kind {record.kind.value} at level {level}")
        if (level == 0) != (record.kind is RecordKind.ROOT):
            raise MalformedLogError(f"record {idx} misplaces the root")
        tree.levels[level][index] = record.digest
        tree.written[level][index] = True
        tree.record_index[(level, index)] = idx
    fill_inner(tree, sml.hash_alg, strict_tpm)
    return tree


# -- binary format ----------------------------------------------------------


def serialize(sml: SmlTree) -> bytes:
    out = bytearray(
        _HEADER.pack(
            MAGIC,
            VERSION,
            sml.hash_alg.value,
            sml.arity,
            sml.depth,
            sml.leaf_count,
            len(sml.records),
        )
    )
    for r in sml.records:
        out.append(r.flags)
        if r.digest is not None:
            out += r.digest
    return bytes(out)


def _kind_from_flags(flags: int, offset: int) -> RecordKind:
    if flags & ~0x0F:
        raise MalformedLogError(f"reserved flag bits set at offset {offset}")
    kinds = [
        k
        for bit, k in (
            (FLAG_LEAF, RecordKind.LEAF),
            (FLAG_ROOT, RecordKind.ROOT),
            (FLAG_FALLBACK, RecordKind.LINEAR_FALLBACK),
        )
        if flags & bit
    ]
    if len(kinds) > 1:
        raise MalformedLogError(f"conflicting record flags {flags:#04x} at offset {offset}")
    return kinds[0] if kinds else RecordKind.INNER


def deserialize(data: bytes) -> SmlTree:
    if len(data) < _HEADER.size:
        if not MAGIC.startswith(data[:4]):
            raise BadMagicError("not a tree-formed SML file")
        raise TruncatedLogError("header truncated")
    magic, version, alg_byte, arity, depth, leaves, count = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}")
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported version {version}")
    try:
        alg = HashAlgorithm(alg_byte)
    except ValueError:
        raise MalformedLogError(f"unknown hash algorithm byte {alg_byte:#04x}") from None
    if arity < 2 or depth < 1:
        raise MalformedLogError(f"bad shape arity={arity} depth={depth}")
    size = alg.output_length
    pos = _HEADER.size
    records = []
    for _ in range(count):
        if pos >= len(data):
            raise TruncatedLogError(f"log ends after {len(records)} of {count} records")
        flags = data[pos]
        kind = _kind_from_flags(flags, pos)
        pos += 1
        if flags & FLAG_NIL:
            records.append(SmlRecord(None, kind))
            continue
        if pos + size > len(data):
            raise TruncatedLogError(f"digest truncated at offset {pos}")
        records.append(SmlRecord(bytes(data[pos:pos + size]), kind))
        pos += size
    if pos != len(data):
        raise DigestLengthError(
            f"{len(data) - pos} trailing bytes: record sizes do not match {alg.name}"
        )
    sml = SmlTree(alg, arity, depth, 0, [])
    try:
        for r in records:
            sml.append(r)
    except SmlError as exc:
        raise MalformedLogError(str(exc)) from None
    if sml.leaf_count != leaves:
        raise MalformedLogError(f"header claims {leaves} leaves, found {sml.leaf_count}")
    return sml


def read_sml(path) -> SmlTree:
    with open(path, "rb") as fh:
        return deserialize(fh.read())


def write_sml(path, sml: SmlTree) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize(sml))


def hexdump(data: bytes, width: int = 16) -> str:
    lines = []
    for off in range(0, len(data), width):
        chunk = data[off:off + width]
        hexpart = " ".join(f"{b:02x}" for b in chunk)
        text = "".join(chr(b) if 32 <= b < 127 else "." for b in chunk)
        lines.append(f"{off:08x}  {hexpart:<{width * 3 - 1}}  |{text}|")
    return "\n".join(lines)


def describe(sml: SmlTree) -> str:
    """Record-per-line listing used by ``tfv dump``."""
    positions: List[Optional[Position]]
    try:
        positions = list(write_schedule(sml.leaf_count, sml.depth, sml.arity))
    except SmlError:
        positions = []
    lines = [
        f"# {sml.hash_alg.name} arity={sml.arity} depth={sml.depth} "
        f"leaves={sml.leaf_count} records={len(sml.records)}"
    ]
    for i, r in enumerate(sml.records):
        where = ""
        if i < len(positions) and r.kind is not RecordKind.LINEAR_FALLBACK:
            where = format_path(position_to_path(positions[i], sml.arity), sml.arity) or "root"
        digest = "nil" if r.digest is None else r.digest.hex()
        lines.append(f"{i + 1:>6} {r.kind.value:<15} {where:<12} {digest}")
    return "\n".join(lines)
