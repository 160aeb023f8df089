import random
from collections import Counter
from fractions import Fraction

import pytest

from pltkit.audit import (ParamsTooLarge, check_shape_independence,
                          check_support_structure, measure_rate,
                          query_signature, recover_points, signature_tallies,
                          tv_distance, tv_privacy_test)
from pltkit.engine import (Database, RunOverrides, Transcript, build_query,
                           run_plt)
from pltkit.fields import field_new
from pltkit.grs import (Demand, FunctionTable, SuperMessageSpec, build_secret,
                        build_q_vectors, build_function_table, choose_omegas)

GF5 = field_new(5)


def client_material(k, d, q, seed):
    field = field_new(q)
    rng = random.Random(seed)
    support = tuple(sorted(rng.sample(range(1, k + 1), d)))
    coeffs = tuple(field.rand_nonzero(rng) for _ in range(d))
    demand = Demand(support, coeffs, field)
    omegas = choose_omegas(field, k, rng)
    secret = build_secret(demand, omegas, field, rng)
    spec = build_q_vectors(secret, k, d)
    table = build_function_table(secret, demand, k, field, rng)
    return demand, secret, spec, table, field


# ---------------------------------------------------------------- signature

def test_query_signature_components():
    demand = Demand((1, 2, 3), (2, 1, 1), GF5)
    overrides = RunOverrides(fixed_omegas=(0, 1, 2, 3), free_alphas={4: 2},
                             scalar_overrides={0: 2, 1: 1, 2: 4, 3: 3})
    bundle = build_query(demand, 4, 2, random.Random(1), overrides=overrides)
    sig = query_signature(bundle)
    assert sig["alpha"] == (1, 2, 4, 2)
    assert sig["scalars"] == (2, 1, 4, 3)  # the per-subset scaling choices
    assert sig["supports"] == tuple(
        tuple(1 if v else 0 for v in row) for row in bundle.table.betas)
    rounds = {t: count for t, count, _ in sig["shape"]}
    assert rounds == {1: 2, 2: 5, 3: 4, 4: 1}
    for t, count, tuples in sig["shape"]:
        assert len(tuples) == count
        assert all(len(tt) == t for tt in tuples)


def test_tv_distance_toy_counts():
    a = {"alpha": Counter({"x": 3, "y": 1}), "scalars": Counter({"x": 4}),
         "supports": Counter({"x": 4}), "shape": Counter({"s": 4})}
    b = {"alpha": Counter({"x": 1, "y": 3}), "scalars": Counter({"x": 4}),
         "supports": Counter({"y": 4}), "shape": Counter({"s": 4})}
    out = tv_distance(a, b, 4)
    assert out["alpha"] == 0.5
    assert out["scalars"] == 0.0
    assert out["supports"] == 1.0
    assert out["shape"] == 0.0


# ------------------------------------------------------------------- points

def test_recover_points_from_query_vectors():
    for seed in range(6):
        _, secret, spec, _, field = client_material(5, 3, 11, seed)
        assert recover_points(spec, field) == secret.omegas


def test_recover_points_validation():
    _, _, spec, _, field = client_material(4, 2, 7, 0)
    with pytest.raises(ValueError):
        recover_points(SuperMessageSpec(spec.q_vectors[:1]), field)
    rows = [list(r) for r in spec.q_vectors]
    rows[2][0] = (rows[2][0] + 1) % 7  # break the geometric progression
    with pytest.raises(ValueError):
        recover_points(SuperMessageSpec(tuple(tuple(r) for r in rows)), field)


# ---------------------------------------------------------------- structure

def test_support_structure_exhaustive_branch():
    _, _, spec, table, field = client_material(4, 3, 5, 2)
    rep = check_support_structure(spec, table, field)
    assert rep.exhaustive  # r = 2, q = 5
    assert rep.ok and rep.bijection_ok
    assert set(rep.valid_rows_per_subset.values()) == {4}


def test_support_structure_annihilator_branch():
    _, _, spec, table, field = client_material(5, 2, 11, 3)
    rep = check_support_structure(spec, table, field)
    assert not rep.exhaustive  # r = 4
    assert rep.ok
    assert set(rep.valid_rows_per_subset.values()) == {10}


def test_support_structure_detects_tampering():
    _, _, spec, table, field = client_material(4, 3, 5, 4)
    rows = list(table.betas)
    rows[1] = tuple((v + 1) % 5 for v in rows[1])
    bad = FunctionTable(table.subsets, tuple(rows), table.star_index,
                        table.star_scalar)
    rep = check_support_structure(spec, bad, field)
    assert not rep.ok


# --------------------------------------------------------------- plan shape

def test_shape_independence_passes_honest():
    rep = check_shape_independence(2, 4, 2, seeds=range(6))
    assert rep.ok
    assert rep.seeds_checked == 6
    assert rep.drop_profile is not None


def test_shape_independence_picks_a_prime():
    # F + 1 = 7 is prime already; F = 5 forces a search past 6
    assert check_shape_independence(2, 5, 2, seeds=range(2)).ok


def test_shape_independence_rejects_small_field():
    with pytest.raises(ValueError):
        check_shape_independence(2, 4, 2, seeds=range(1), q=3)


# ---------------------------------------------------------------- tv audits

def test_tv_passes_for_honest_client():
    rep = tv_privacy_test(3, 2, 2, GF5, (1, 2), (2, 3), samples=600, seed=1,
                          threshold=0.3)
    assert rep.structural_pass
    assert rep.structural_detail == {"support_bijection": True,
                                     "beta_count": True,
                                     "shape_star_independence": True}
    assert rep.passes
    assert rep.samples == 600
    assert set(rep.components) == {"alpha", "scalars", "supports", "shape"}


def test_tv_pinned_coefficients_expose_the_conditional_leak():
    """Fixing the same coefficient vector on both sides conditions the query
    distribution: the support coordinates of the first query vector obey a
    coefficient-dependent exclusion, worth exactly 1/4 of TV mass at these
    parameters.  The estimate must land near that value, not near zero."""
    rep = tv_privacy_test(3, 2, 2, GF5, ((1, 2), (2, 1)), ((2, 3), (2, 1)),
                          samples=4000, seed=2, threshold=0.05)
    assert not rep.passes
    assert rep.worst_component() == "alpha"
    assert 0.20 < rep.components["alpha"] < 0.35
    # under the model's prior (fresh coefficients) the same supports blend in
    honest = tv_privacy_test(3, 2, 2, GF5, (1, 2), (2, 3), samples=4000,
                             seed=2, threshold=0.15)
    assert honest.passes


@pytest.mark.parametrize("flag,component", [
    ("break_free_alphas", "alpha"),
    ("break_star_scalar", "scalars"),
    ("break_drop_symmetry", "shape"),
])
def test_tv_mutants_are_caught(flag, component):
    """Each de-randomized client must light up exactly its own component."""
    rep = tv_privacy_test(3, 2, 2, GF5, (1, 2), (2, 3), samples=600, seed=3,
                          threshold=0.3, overrides=RunOverrides(**{flag: True}))
    assert not rep.passes
    assert rep.tv_estimate > 0.3
    assert rep.worst_component() == component


def test_tv_rejects_oversized_signature_space():
    with pytest.raises(ParamsTooLarge):
        tv_privacy_test(9, 1, 2, GF5, (1,), (2,), samples=10)


def test_signature_tallies_deterministic_merge():
    a = signature_tallies(3, 2, 2, GF5, (1, 2), None, 50, seed=4,
                          label="side0", workers=4)
    b = signature_tallies(3, 2, 2, GF5, (1, 2), None, 50, seed=4,
                          label="side0", workers=1)
    assert a == b


# --------------------------------------------------------------------- rate

def test_measure_rate_on_real_run():
    db = Database.random(GF5, 3, 8, random.Random(5))
    demand = Demand((1, 3), (1, 2), GF5)
    result = run_plt(db, demand, 2, seed=5)
    rep = measure_rate(result.transcript)
    assert rep.rate == Fraction(2, 3)
    assert rep.capacity == Fraction(2, 3)
    assert rep.achieves_capacity


def make_transcript(rate, symbols, per_server):
    return Transcript(n_servers=2, k=3, d=2, q=5, f_count=3, rank=2,
                      s=symbols, per_server=per_server, rate=rate, seed=0)


def test_measure_rate_flags_suboptimal_download():
    t = make_transcript(Fraction(8, 13),
                        8, ({"query_bytes": 1, "answer_symbols": 7},
                            {"query_bytes": 1, "answer_symbols": 6}))
    rep = measure_rate(t)
    assert not rep.achieves_capacity
    assert rep.capacity == Fraction(2, 3)


def test_measure_rate_rejects_inconsistent_transcript():
    t = make_transcript(Fraction(1, 2),
                        8, ({"query_bytes": 1, "answer_symbols": 6},
                            {"query_bytes": 1, "answer_symbols": 6}))
    with pytest.raises(AssertionError):
        measure_rate(t)
