"""Hash primitives and the extend algebra.

A digest is plain ``bytes`` of the algorithm's output length.  The empty
node value ``nil`` is ``None``: it is kept out of band so that it can never
collide with an all-zero register value.
"""

from __future__ import annotations

import enum
import hashlib
from typing import Iterable, Optional

Digest = Optional[bytes]

NIL: Digest = None


class DigestError(ValueError):
    """A non-nil digest has the wrong length for the algorithm in use."""


class HashAlgorithm(enum.Enum):
    SHA1 = 0x01
    SHA256 = 0x02

    @property
    def output_length(self) -> int:
        return 20 if self is HashAlgorithm.SHA1 else 32

    @property
    def hashlib_name(self) -> str:
        return "sha1" if self is HashAlgorithm.SHA1 else "sha256"

    def zero(self) -> bytes:
        """The all-zero value a standard register holds after reset."""
        return bytes(self.output_length)

    @classmethod
    def parse(cls, name: str) -> "HashAlgorithm":
        try:
            return cls[name.upper().replace("-", "")]
        except KeyError:
            raise ValueError(f"unknown hash algorithm {name!r}") from None


DEFAULT_ALG = HashAlgorithm.SHA1


def check_digest(value: Digest, alg: HashAlgorithm) -> Digest:
    if value is not None and len(value) != alg.output_length:
        raise DigestError(
            f"{alg.name} digest must be {alg.output_length} bytes, got {len(value)}"
        )
    return value


def hash_leaf(data: bytes, alg: HashAlgorithm = DEFAULT_ALG) -> bytes:
    return hashlib.new(alg.hashlib_name, data).digest()


def extend(a: Digest, b: Digest, alg: HashAlgorithm = DEFAULT_ALG) -> Digest:
    """``a ◇ b = H(a || b)`` with nil as a two-sided unit."""
    check_digest(a, alg)
    check_digest(b, alg)
    if a is None:
        return b
    if b is None:
        return a
    return hashlib.new(alg.hashlib_name, a + b).digest()


def combine(
    children: Iterable[Digest],
    alg: HashAlgorithm = DEFAULT_ALG,
    strict_tpm: bool = False,
) -> Digest:
    """Value of an inner node from its children, left to right.

    Children are chained linearly onto an empty start value, which is nil
    for a true Merkle tree and the zero register for strict-TPM mode, where
    a binary node reads ``(0 ◇ x) ◇ y``.  nil children contribute nothing,
    and a node whose children are all nil is itself nil.
    """
    acc: Digest = None
    for child in children:
        if child is None:
            continue
        if acc is None and strict_tpm:
            acc = alg.zero()
        acc = extend(acc, child, alg)
    return acc


def chain(
    measurements: Iterable[Digest],
    initial: Digest = None,
    alg: HashAlgorithm = DEFAULT_ALG,
) -> Digest:
    """Left fold of extend, as an ordinary authenticated-boot register does."""
    value = initial
    for m in measurements:
        value = extend(value, m, alg)
    return value


def to_hex(value: Digest) -> str:
    return "nil" if value is None else value.hex()


def from_hex(text: str, alg: HashAlgorithm = DEFAULT_ALG) -> Digest:
    if text == "nil":
        return None
    return check_digest(bytes.fromhex(text), alg)
