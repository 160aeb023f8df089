import random
from itertools import combinations
from math import comb

import pytest

from pltkit.fields import field_new
from pltkit.plan import (BadIndex, GuardLimits, SizeGuard, SymbolMask,
                         Undecodable, build_mask, check_size_guard,
                         eliminate_redundancy, generate_full_blocks,
                         pc_answer, pc_decode)

GF5 = field_new(5)

# Hand-checked walkthrough table: 2x1+x2+x3 over GF(5), points 0..3,
# function scalars (2,1,4,3).  See test_grs for the derivation.
EX_BETAS = ((4, 2), (3, 1), (1, 4), (0, 3))


def generic_betas(f_count, rank, field, rng):
    """Rank-``rank`` coefficient table: geometric rows on distinct points."""
    points = rng.sample(range(1, field.q), f_count)
    return tuple(
        tuple((field.rand_nonzero(rng) * pow(p, i, field.q)) % field.q
              for i in range(rank))
        for p in points)


def identity_mask(s):
    return SymbolMask(tuple(range(s)), tuple(1 for _ in range(s)))


def make_plan(n, f_count, rank, star, q, seed, mask=None):
    field = field_new(q)
    rng = random.Random(seed)
    s = n ** f_count
    if mask is None:
        mask = build_mask(s, rng)
    blocks = generate_full_blocks(n, f_count, star, mask)
    betas = generic_betas(f_count, rank, field, rng)
    plan = eliminate_redundancy(blocks, betas, rank, field)
    return plan, betas, field, rng


def stream_oracle(betas, rank, s, field, rng):
    """Random super-message symbols and the induced function streams."""
    q = field.q
    xhat = [[rng.randrange(q) for _ in range(s)] for _ in range(rank)]
    y = [[sum(b * xhat[i][sym] for i, b in enumerate(beta)) % q
          for sym in range(s)]
         for beta in betas]
    return y


# ----------------------------------------------------------------- masking

def test_build_mask_valid():
    rng = random.Random(0)
    for s in (1, 2, 16, 81):
        m = build_mask(s, rng)
        assert sorted(m.perm) == list(range(s))
        assert all(v in (1, -1) for v in m.signs)
        assert m.s == s
    with pytest.raises(ValueError):
        build_mask(0, rng)


def test_mask_validation():
    with pytest.raises(ValueError):
        SymbolMask((0, 0), (1, 1))
    with pytest.raises(ValueError):
        SymbolMask((0, 1), (1, 2))
    with pytest.raises(ValueError):
        SymbolMask((0, 1), (1,))


def test_size_guard():
    assert check_size_guard(2, 4, 2) == 16
    with pytest.raises(SizeGuard):
        check_size_guard(2, 4, 2, GuardLimits(max_functions=3))
    with pytest.raises(SizeGuard):
        check_size_guard(2, 4, 2, GuardLimits(max_plan_bytes=8))


# ----------------------------------------------------------- block structure

@pytest.mark.parametrize("n,f_count", [(2, 3), (2, 4), (3, 3), (2, 5)])
def test_blocks_partition_symbols(n, f_count):
    s = n ** f_count
    blocks = generate_full_blocks(n, f_count, 0, identity_mask(s))
    starred_slots = []
    for server in range(n):
        for rnd in blocks.rounds[server]:
            for row in rnd.rows:
                if row.starred:
                    assert len(row.cells) == 1
                    starred_slots.append(row.cells[0][1])
    # every slot carries exactly one starred symbol
    assert sorted(starred_slots) == list(range(s))


@pytest.mark.parametrize("n,f_count,star", [(2, 4, 0), (2, 4, 2), (3, 3, 1)])
def test_block_row_counts(n, f_count, star):
    blocks = generate_full_blocks(n, f_count, star, identity_mask(n ** f_count))
    for server in range(n):
        for t in range(1, f_count + 1):
            rows = blocks.rounds[server][t - 1].rows
            starred = sum(1 for r in rows if r.starred)
            ext = len(rows) - starred
            if t == 1:
                assert starred == 1 and ext == f_count - 1
            else:
                inst = (n - 1) ** (t - 1)
                assert starred == comb(f_count - 1, t - 1) * inst
                assert ext == comb(f_count - 1, t) * inst


def test_exterior_rows_alternate_signs_over_shared_slots():
    blocks = generate_full_blocks(2, 4, 0, identity_mask(16))
    for server in range(2):
        for t in range(2, 5):
            for row in blocks.rounds[server][t - 1].rows:
                if row.starred:
                    continue
                members = tuple(g for g, _, _ in row.cells)
                assert members == row.type
                signs = [sign for _, _, sign in row.cells]
                assert signs == [1 if i % 2 == 0 else -1 for i in range(t)]


def test_blocks_validation():
    with pytest.raises(ValueError):
        generate_full_blocks(2, 3, 3, identity_mask(8))
    with pytest.raises(ValueError):
        generate_full_blocks(0, 3, 0, identity_mask(1))
    with pytest.raises(ValueError):
        generate_full_blocks(2, 3, 0, identity_mask(9))  # mask sized for N=3


# -------------------------------------------------------------- elimination

def test_walkthrough_elimination_pattern():
    """The worked GF(5) instance, checked against hand-reduced algebra."""
    blocks = generate_full_blocks(2, 4, 0, identity_mask(16))
    plan = eliminate_redundancy(blocks, EX_BETAS, 2, GF5)

    r1 = plan.patterns[0]
    assert r1.types == ((0,), (1,), (2,), (3,))
    assert r1.kept == [True, True, False, False]
    # beta_2 = 3*beta_0 + 3*beta_1 and beta_3 = 2*beta_0 + 4*beta_1 over GF(5)
    assert sorted(r1.certificates[2]) == [(0, 3), (1, 3)]
    assert sorted(r1.certificates[3]) == [(0, 2), (1, 4)]

    r2 = plan.patterns[1]
    assert r2.types == tuple(combinations(range(4), 2))
    assert r2.kept == [True, True, True, True, True, False]  # only (2,3) drops

    assert all(plan.patterns[2].kept)
    assert all(plan.patterns[3].kept)
    assert plan.drop_counts == [[2, 1, 0, 0], [2, 1, 0, 0]]
    assert plan.kept_per_server == 12
    assert [len(e) for e in plan.per_server] == [12, 12]


def test_certificates_reference_only_kept_types():
    for seed in range(5):
        plan, _, _, _ = make_plan(2, 5, 3, seed % 5, 11, seed)
        for pat in plan.patterns:
            for pos, cert in pat.certificates.items():
                assert not pat.kept[pos]
                for kept_pos, lam in cert:
                    assert pat.kept[kept_pos]
                    assert lam % 11 != 0


@pytest.mark.parametrize("n,f_count,rank", [
    (2, 2, 1), (2, 3, 2), (2, 4, 2), (2, 4, 3), (2, 5, 3),
    (3, 3, 2), (3, 4, 2), (3, 4, 4), (2, 6, 4), (1, 3, 2),
])
def test_kept_count_formula(n, f_count, rank):
    """Per-server downloads land exactly on S * (1/N + ... + 1/N^rank)."""
    plan, _, _, _ = make_plan(n, f_count, rank, 0, 13, seed=f_count * 7 + rank)
    expected = sum(n ** (f_count - t) for t in range(1, rank + 1))
    for exprs in plan.per_server:
        assert len(exprs) == expected
    assert plan.kept_per_server == expected


def test_expression_shape():
    plan, _, _, _ = make_plan(2, 4, 2, 1, 7, seed=3)
    for exprs in plan.per_server:
        for e in exprs:
            assert e.t == len(e.terms)
            funcs = [g for g, _, _ in e.terms]
            assert len(set(funcs)) == len(funcs)
            assert all(c % 7 != 0 for _, _, c in e.terms)
            assert all(0 <= sym < 16 for _, sym, _ in e.terms)


def test_drop_counts_independent_of_star_and_server():
    field = field_new(11)
    rng = random.Random(42)
    betas = generic_betas(4, 2, field, rng)
    mask = identity_mask(16)
    seen = set()
    for star in range(4):
        blocks = generate_full_blocks(2, 4, star, mask)
        plan = eliminate_redundancy(blocks, betas, 2, field)
        assert plan.drop_counts[0] == plan.drop_counts[1]
        seen.add(tuple(plan.drop_counts[0]))
    assert len(seen) == 1


def test_eliminate_validation():
    blocks = generate_full_blocks(2, 3, 0, identity_mask(8))
    field = field_new(7)
    with pytest.raises(ValueError):
        eliminate_redundancy(blocks, ((1, 2), (2, 4)), 2, field)  # 2 rows for F=3
    with pytest.raises(ValueError):
        eliminate_redundancy(blocks, ((1,), (2,), (3,)), 2, field)  # length != rank
    # declared rank 2 but all rows proportional
    with pytest.raises(ValueError):
        eliminate_redundancy(blocks, ((1, 2), (2, 4), (3, 6)), 2, field)


# ------------------------------------------------------------ answer/decode

def test_pc_answer_matches_manual_evaluation():
    plan, betas, field, rng = make_plan(2, 4, 2, 0, 5, seed=9)
    y = stream_oracle(betas, 2, plan.s, field, rng)
    for exprs in plan.per_server:
        got = pc_answer(exprs, y, field)
        manual = [sum(c * y[g][sym] for g, sym, c in e.terms) % 5 for e in exprs]
        assert got == manual


def test_pc_answer_bounds():
    plan, betas, field, rng = make_plan(2, 3, 2, 0, 5, seed=1)
    y = stream_oracle(betas, 2, plan.s, field, rng)
    with pytest.raises(BadIndex):
        pc_answer(plan.per_server[0], y[:1], field)  # function range shrinks
    short = [stream[:2] for stream in y]
    with pytest.raises(BadIndex):
        pc_answer(plan.per_server[0], short, field)


@pytest.mark.parametrize("n,f_count,rank,star,q", [
    (2, 3, 2, 0, 5), (2, 4, 2, 3, 5), (2, 4, 3, 1, 7), (3, 3, 2, 2, 7),
    (2, 5, 4, 0, 13), (3, 4, 2, 3, 11), (1, 3, 2, 1, 5), (2, 6, 3, 4, 11),
])
def test_decode_recovers_starred_stream(n, f_count, rank, star, q):
    for seed in range(3):
        plan, betas, field, rng = make_plan(n, f_count, rank, star, q, seed)
        y = stream_oracle(betas, rank, plan.s, field, rng)
        answers = [pc_answer(plan.per_server[srv], y, field) for srv in range(n)]
        assert pc_decode(plan, answers, field) == y[star]


def test_decode_validates_answer_shape():
    plan, betas, field, rng = make_plan(2, 3, 2, 0, 5, seed=4)
    y = stream_oracle(betas, 2, plan.s, field, rng)
    answers = [pc_answer(plan.per_server[srv], y, field) for srv in range(2)]
    with pytest.raises(Undecodable):
        pc_decode(plan, answers[:1], field)
    with pytest.raises(Undecodable):
        pc_decode(plan, [answers[0], answers[1][:-1]], field)


def test_blocks_survive_reuse_across_tables():
    """One shared block structure, two different coefficient tables in turn;
    the second plan must decode cleanly despite the first pass's bookkeeping."""
    field = field_new(11)
    rng = random.Random(77)
    mask = identity_mask(16)
    blocks = generate_full_blocks(2, 4, 0, mask)
    betas_a = generic_betas(4, 2, field, rng)
    betas_b = generic_betas(4, 3, field, rng)
    eliminate_redundancy(blocks, betas_a, 2, field)
    plan_b = eliminate_redundancy(blocks, betas_b, 3, field)
    y = stream_oracle(betas_b, 3, 16, field, rng)
    answers = [pc_answer(plan_b.per_server[srv], y, field) for srv in range(2)]
    assert pc_decode(plan_b, answers, field) == y[0]
