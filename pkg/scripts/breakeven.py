"""Largest bad-leaf fraction at which tree validation beats the linear log."""

import argparse

from tfv.cost import breakeven_fraction, efficiency_bound, lambda_for_bound


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--depths", type=int, nargs="+", default=[8, 12, 16, 20])
    ap.add_argument("--bounds", type=float, nargs="+", default=[0.99, 0.9, 0.75, 0.6])
    args = ap.parse_args()

    print(f"{'bound':>6} {'lambda':>8} " + " ".join(f"{'d=' + str(d):>7}" for d in args.depths))
    for bound in args.bounds:
        lam = lambda_for_bound(bound)
        assert abs(efficiency_bound(lam) - bound) < 1e-12
        cells = " ".join(f"{breakeven_fraction(d, lam):7.4f}" for d in args.depths)
        print(f"{bound:6.2f} {lam:8.5f} {cells}")


if __name__ == "__main__":
    main()
