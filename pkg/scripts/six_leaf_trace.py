"""Trace register contents while six measurements form a depth-3 tree."""

import hashlib

from tfv.builder import TreeBuilder
from tfv.registers import RegisterBank
from tfv.sml import format_path, position_to_path


def show(v):
    return v.hex()[:8] if v else "nil"


def main():
    names = "abcdef"
    bank = RegisterBank(3)
    t = TreeBuilder(bank, 0, 3)
    seen = 0
    for name in names:
        t.add_measurement(hashlib.sha1(name.encode()).digest())
        regs = "  ".join(f"V{k}={show(t.value(k))}" for k in range(1, 4))
        print(f"after {name}: {regs}")
        for rec, pos in zip(t.sml.records[seen:], t.positions[seen:]):
            print(f"    wrote {show(rec.digest)} at {format_path(position_to_path(pos)) or 'root'}")
        seen = len(t.sml.records)
    t.finalize()
    print("finalize:")
    for n, (rec, pos) in enumerate(zip(t.sml.records[seen:], t.positions[seen:]), seen + 1):
        print(f"    record {n:2}: {show(rec.digest)} at {format_path(position_to_path(pos)) or 'root'}")
    print(f"root register: {bank.pcr_read(0).hex()}")


if __name__ == "__main__":
    main()
