"""Emulated bank of verification data registers (PCR stand-ins).

Registers carry a pristine ("reset") flag: the first extend after a reset
writes the measurement straight into the register instead of hashing it
onto the previous value.  In strict-TPM mode a reset register holds the
all-zero value and every extend hashes, which yields ``(0 ◇ x) ◇ y`` nodes.

The bank also exposes the tree-extend command facade: one register is
bound as a tree root and each measurement returns the log records it
produced.
"""

from __future__ import annotations

import enum
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import TYPE_CHECKING, Dict, List

from .digest import DEFAULT_ALG, Digest, HashAlgorithm, check_digest, extend

if TYPE_CHECKING:
    from .builder import TreeBuilder
    from .sml import SmlRecord


class RegisterError(RuntimeError):
    pass


class RegisterIndexError(RegisterError, IndexError):
    pass


class LockedRegisterError(RegisterError):
    pass


class NilMeasurementError(RegisterError, ValueError):
    pass


class RegisterBusyError(RegisterError):
    """Another caller is mutating the bank."""


class UnboundRegisterError(RegisterError):
    pass


class TreeFullError(RegisterError):
    pass


class Role(enum.Enum):
    FREE = "free"
    INTERMEDIATE = "intermediate"
    TREE_ROOT = "tree_root"
    LOCKED = "locked"


@dataclass
class Register:
    value: Digest = None
    pristine: bool = True
    role: Role = Role.FREE


class RegisterBank:
    def __init__(
        self,
        count: int = 24,
        hash_alg: HashAlgorithm = DEFAULT_ALG,
        strict_tpm: bool = False,
    ):
        if count < 1:
            raise ValueError("a bank needs at least one register")
        self.hash_alg = hash_alg
        self.strict_tpm = strict_tpm
        self.registers: List[Register] = [Register() for _ in range(count)]
        for i in range(count):
            self._reset(i)
        self.extend_count = 0
        self._mutex = threading.RLock()
        self._builders: Dict[int, "TreeBuilder"] = {}

    def __len__(self) -> int:
        return len(self.registers)

    @contextmanager
    def _exclusive(self):
        if not self._mutex.acquire(blocking=False):
            raise RegisterBusyError("register bank is busy")
        try:
            yield
        finally:
            self._mutex.release()

    def _get(self, i: int) -> Register:
        if not 0 <= i < len(self.registers):
            raise RegisterIndexError(f"register {i} out of range 0..{len(self.registers) - 1}")
        return self.registers[i]

    def _mutable(self, i: int) -> Register:
        reg = self._get(i)
        if reg.role is Role.LOCKED:
            raise LockedRegisterError(f"register {i} is locked")
        return reg

    def _reset(self, i: int) -> None:
        reg = self.registers[i]
        reg.value = self.hash_alg.zero() if self.strict_tpm else None
        reg.pristine = True

    # -- standard command set ------------------------------------------------

    def pcr_read(self, i: int) -> Digest:
        return self._get(i).value

    def pcr_reset(self, i: int) -> None:
        with self._exclusive():
            self._mutable(i)
            self._reset(i)

    def pcr_extend(self, i: int, m: Digest) -> Digest:
        with self._exclusive():
            return self._extend(i, m)

    def _extend(self, i: int, m: Digest) -> Digest:
        reg = self._mutable(i)
        if m is None:
            raise NilMeasurementError("cannot extend a register with nil")
        check_digest(m, self.hash_alg)
        if reg.pristine and not self.strict_tpm:
            reg.value = m
        else:
            reg.value = extend(reg.value, m, self.hash_alg)
            self.extend_count += 1
        reg.pristine = False
        return reg.value

    # -- helpers for the tree builder ----------------------------------------

    def slot_value(self, i: int) -> Digest:
        """Register value as a tree node: nil while the register is pristine."""
        reg = self._get(i)
        return None if reg.pristine else reg.value

    def set_role(self, i: int, role: Role) -> None:
        self._mutable(i).role = role

    def lock(self, i: int) -> None:
        self._mutable(i).role = Role.LOCKED

    def unlock(self, i: int) -> None:
        """Reopen a locked root for linear fallback extension."""
        self._get(i).role = Role.TREE_ROOT

    def locked(self) -> List[int]:
        return [i for i, r in enumerate(self.registers) if r.role is Role.LOCKED]

    # -- tree-extend facade --------------------------------------------------

    def bind_tree(self, root: int, depth: int, arity: int = 2) -> "TreeBuilder":
        """Designate ``root`` as a tree root using the next ``depth - 1`` registers."""
        from .builder import TreeBuilder

        if any(b.active for b in self._builders.values()):
            raise RegisterBusyError("only one tree may be formed at a time")
        builder = TreeBuilder(self, root, depth, arity)
        self._builders[root] = builder
        return builder

    def _builder(self, root: int) -> "TreeBuilder":
        try:
            return self._builders[root]
        except KeyError:
            raise UnboundRegisterError(f"register {root} is not bound to a tree") from None

    def tree_extend(self, root: int, m: Digest) -> List["SmlRecord"]:
        """Add one measurement to the tree rooted at ``root``.

        Returns every log write of the step, leaf first, root last when the
        step completes the tree; the root register is then locked.
        """
        builder = self._builder(root)
        if not builder.active:
            raise TreeFullError(f"tree at register {root} is exhausted")
        with self._exclusive():
            return builder.add_measurement(m)

    def tree_finalize(self, root: int) -> List["SmlRecord"]:
        builder = self._builder(root)
        with self._exclusive():
            return builder.finalize()

    def tree_log(self, root: int):
        return self._builder(root).sml
