"""Expected fraction of bad inner nodes against the bad-leaf fraction.

Writes the CSV table for the requested depths, optionally with Monte Carlo
columns next to the closed form.
"""

import argparse
import csv
import sys

from tfv.cost import (
    CostParams,
    choices_for_fraction,
    emit_cost_table,
    f_grid,
    monte_carlo_bad_inner,
    rows_to_csv,
)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--depths", type=int, nargs="+", default=[16])
    ap.add_argument("--lambda", dest="lam", type=float, default=1 / 98)
    ap.add_argument("--step", type=float, default=0.05)
    ap.add_argument("--mc-trials", type=int, default=0, help="add Monte Carlo columns")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rows = emit_cost_table(args.depths, f_grid(args.step), CostParams.from_lambda(args.lam))
    if not args.mc_trials:
        sys.stdout.write(rows_to_csv(rows))
        return
    out = csv.writer(sys.stdout, lineterminator="\n")
    out.writerow(["d", "f", "e_inner", "mc_mean", "mc_stderr"])
    for r in rows:
        if r.f == 1.0:
            out.writerow([r.d, r.f, r.e_inner, r.e_inner, 0.0])
            continue
        mc = monte_carlo_bad_inner(r.d, choices_for_fraction(r.d, r.f), args.mc_trials, args.seed)
        out.writerow([r.d, r.f, r.e_inner, mc.mean, mc.stderr])


if __name__ == "__main__":
    main()
