#!/usr/bin/env python3
"""Measure download rate across a parameter grid and compare to the formula.

Every row should end in 'exact': the measured rate is a rational number
and must equal the closed form, not approximate it.
"""

import argparse
import math
import random

from pltkit import Database, Demand, field_new, mds_check, plt_capacity_L1, required_symbols, run_plt


def run_point(n, k, d, q, trials, seed):
    field = field_new(q)
    s = required_symbols(n, k, d)
    want = plt_capacity_L1(n, k, d).value
    rng = random.Random((seed, n, k, d, q).__repr__())
    for _ in range(trials):
        db = Database.random(field, k, s, rng)
        support = tuple(sorted(rng.sample(range(1, k + 1), d)))
        coeffs = tuple(field.rand_nonzero(rng) for _ in range(d))
        demand = Demand(support, coeffs, field)
        res = run_plt(db, demand, n, rng=rng)
        assert mds_check(db, demand, res.recovered)
        assert res.transcript.rate == want
    return want, s


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=3)
    ap.add_argument("--q", type=int, default=7)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    print(f"{'N':>3} {'K':>3} {'D':>3} {'funcs':>6} {'symbols':>8} "
          f"{'rate':>8}  status")
    for n in (2, 3):
        for k in range(2, 6):
            for d in range(1, k + 1):
                if math.comb(k, d) > 10:
                    continue
                rate, s = run_point(n, k, d, args.q, args.trials, args.seed)
                print(f"{n:>3} {k:>3} {d:>3} {math.comb(k, d):>6} {s:>8} "
                      f"{str(rate):>8}  exact")
    print(f"\nevery point ran {args.trials} seeded trials at q={args.q}; "
          f"rates matched the closed form and every demand decoded")


if __name__ == "__main__":
    main()
