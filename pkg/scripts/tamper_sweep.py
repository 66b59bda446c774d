"""Inject random single-record edits and tally validation outcomes."""

import argparse
import random
from collections import Counter

from tfv.builder import build_tree
from tfv.sml import SmlRecord, write_schedule
from tfv.validate import build_reference, diagnostic_validate


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--depth", type=int, default=6)
    ap.add_argument("--trials", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = random.Random(args.seed)
    tally = Counter()
    for _ in range(args.trials):
        n = rng.randint(1, 2**args.depth)
        leaves = [rng.randbytes(20) for _ in range(n)]
        t = build_tree(leaves, args.depth)
        idx = rng.randrange(len(t.sml.records))
        level = write_schedule(n, args.depth)[idx][0]
        kind = "leaf" if level == args.depth else "root" if level == 0 else "inner"
        t.sml.records[idx] = SmlRecord(rng.randbytes(20), t.sml.records[idx].kind)
        report = diagnostic_validate(t.sml, t.root_value, build_reference(leaves, args.depth))
        tally[kind, report.outcome.value] += 1
    for (kind, outcome), count in sorted(tally.items()):
        print(f"{kind:6} {outcome:24} {count}")


if __name__ == "__main__":
    main()
