#!/usr/bin/env python3
"""Step through one tiny retrieval with every random choice pinned.

Two servers each hold four messages of sixteen GF(5) symbols.  The client
wants 2*x1 + 1*x2 + 1*x3 without either server learning that the demand
touches messages {1,2,3}.  Pinning the evaluation points, the free
multiplier, and the per-function scalars makes every intermediate value
reproducible, so this doubles as a worked reference for the algebra.
"""

import random

from pltkit import Database, Demand, RunOverrides, field_new, mds_check, run_plt
from pltkit.grs import y_coefficients


def main() -> None:
    field = field_new(5)
    demand = Demand((1, 2, 3), (2, 1, 1), field)
    overrides = RunOverrides(
        fixed_omegas=(0, 1, 2, 3),      # one evaluation point per message
        free_alphas={4: 2},             # the only off-support multiplier
        scalar_overrides={0: 2, 1: 1, 2: 4, 3: 3})

    rng = random.Random(0)
    db = Database.random(field, 4, 16, rng)
    print("demand: 2*x1 + 1*x2 + 1*x3 over GF(5), two servers\n")

    result = run_plt(db, demand, 2, rng=rng, overrides=overrides)
    bundle = result.bundle

    print("-- query construction")
    print(f"evaluation points  omega = {list(bundle.secret.omegas)}")
    print(f"masking polynomial p(x) coefficients (low to high) = "
          f"{list(bundle.secret.p_poly.coeffs)}")
    print("  p vanishes exactly on the off-support points, so dividing the")
    print("  demand coefficients by p(omega_j) plants them in the multipliers:")
    print(f"multipliers alpha = {list(bundle.secret.alphas)}")
    for i, row in enumerate(bundle.spec.q_vectors):
        print(f"Q_{i + 1} = {list(row)}   (alpha_j * omega_j^{i})")

    print("\n-- function table (one combination per size-3 subset)")
    for f, subset in enumerate(bundle.table.subsets):
        row = y_coefficients(bundle.spec, bundle.table.betas[f], field)
        star = "  <- demand, scaled" if f == bundle.table.star_index else ""
        print(f"Y_{f + 1}: support {subset}, coefficients {list(row)}{star}")
    delta = bundle.table.star_scalar
    print(f"star scalar delta = {delta}; the client divides by it, so the")
    print(f"demand stream is {field.inv(delta)} * Y_{bundle.table.star_index + 1}")

    print("\n-- a few transmitted rows from server 0")
    for expr in bundle.server_queries[0].expressions[:3]:
        terms = " + ".join(f"{c}*Y_{f + 1}[{sym}]" for f, sym, c in expr.terms)
        print(f"round {expr.t}: {terms}")
    print("...")

    print("\n-- accounting")
    for n, p in enumerate(result.transcript.per_server):
        print(f"server {n}: {p['answer_symbols']} answer symbols")
    rate = result.transcript.rate
    print(f"rate = 16 useful symbols / "
          f"{sum(p['answer_symbols'] for p in result.transcript.per_server)} "
          f"downloaded = {rate.numerator}/{rate.denominator}")
    print(f"recovery check: {'PASS' if mds_check(db, demand, result.recovered) else 'FAIL'}")


if __name__ == "__main__":
    main()
