#!/usr/bin/env python3
"""Print download-rate tables: exact capacities, bounds, and baselines.

The interesting comparison is the last column block: asking for one
combination of D messages beats recovering the D messages separately and
combining locally, and the gap widens with D.
"""

import argparse
from fractions import Fraction

from pltkit import CapacityQuery, baseline_rates, plt_capacity_L1, plt_upper_bound


def fr(value) -> str:
    if value is None:
        return "n/a"
    if isinstance(value, Fraction) and value.denominator != 1:
        return f"{value.numerator}/{value.denominator}"
    return str(value)


def one_combination_table(n_max: int, k_max: int) -> None:
    print("exact capacity, one combination of D messages out of K")
    print(f"{'N':>3} {'K':>3} {'D':>3}  {'capacity':>10}  {'mm-pir':>8} "
          f"{'pc-full':>8} {'combine':>8}")
    for n in range(2, n_max + 1):
        for k in range(2, k_max + 1):
            for d in range(1, k + 1):
                cap = plt_capacity_L1(n, k, d).value
                base = baseline_rates(CapacityQuery(n, k, 1, d))
                cells = [fr(None if b is None else b.value)
                         for b in (base["mm-pir"], base["pc-full"],
                                   base["mpir-then-combine"])]
                print(f"{n:>3} {k:>3} {d:>3}  {fr(cap):>10}  "
                      f"{cells[0]:>8} {cells[1]:>8} {cells[2]:>8}")
    print()


def wider_demand_table(n_max: int, k_max: int) -> None:
    print("upper bounds for a demand of dimension L (exact at L = 1)")
    print(f"{'N':>3} {'K':>3} {'D':>3} {'L':>3}  {'bound':>8}  regime")
    for n in range(2, n_max + 1):
        for k in range(2, k_max + 1):
            for d in range(1, k + 1):
                for l in range(1, d + 1):
                    rep = plt_upper_bound(CapacityQuery(n, k, l, d))
                    print(f"{n:>3} {k:>3} {d:>3} {l:>3}  {fr(rep.value):>8}  "
                          f"{rep.formula_tag}")
    print()


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-max", type=int, default=3)
    ap.add_argument("--k-max", type=int, default=5)
    args = ap.parse_args()
    one_combination_table(args.n_max, args.k_max)
    wider_demand_table(args.n_max, min(args.k_max, 4))


if __name__ == "__main__":
    main()
