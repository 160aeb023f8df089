"""Per-server download plans over the virtual functions.

Given F virtual functions of rank r over the super-messages, each function
having S = N^F symbols, the plan queries sums of masked symbols in F rounds:
round t asks signed t-wise sums, pairing one fresh starred symbol with a
(t-1)-wise sum already downloaded from another server, plus fresh sums that
avoid the starred function entirely.  Rank deficiency of the function table
makes part of that structure redundant; a greedy rank pass removes it, which
brings the per-server download to exactly S * (1/N + ... + 1/N^r) symbols.

Index conventions: functions and symbols are 0-based here.  A "slot" is a
masked symbol index; the mask maps it to the raw position all functions share.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from itertools import combinations
from typing import Sequence

import numpy as np

from .fields import PrimeField, matrix_rank


class SizeGuard(ValueError):
    """Requested parameters exceed the configured plan-size budget."""


class InternalInvariant(AssertionError):
    """A structural promise of the plan construction failed; this is a bug."""


class BadIndex(IndexError):
    """An expression references a function or symbol out of range."""


class Undecodable(ValueError):
    """The received answers do not determine the starred function."""


@dataclass(frozen=True)
class GuardLimits:
    max_functions: int = 20
    max_plan_bytes: int = 256 * 1024 * 1024


DEFAULT_LIMITS = GuardLimits()


def check_size_guard(n_servers: int, f_count: int, rank: int,
                     limits: GuardLimits = DEFAULT_LIMITS) -> int:
    """Validate (N, F, r) against the budget; returns S = N^F."""
    if f_count > limits.max_functions:
        raise SizeGuard(f"{f_count} functions exceeds the limit of {limits.max_functions}")
    s = n_servers ** f_count
    if rank * s * 8 > limits.max_plan_bytes:
        raise SizeGuard(
            f"plan needs {rank * s * 8} bytes of symbol state, "
            f"budget is {limits.max_plan_bytes}")
    return s


@dataclass(frozen=True)
class SymbolMask:
    """Common symbol relabeling: a permutation and a sign per masked index."""

    perm: tuple[int, ...]
    signs: tuple[int, ...]  # entries in {+1, -1}

    def __post_init__(self):
        if sorted(self.perm) != list(range(len(self.perm))):
            raise ValueError("perm must be a permutation of 0..S-1")
        if len(self.signs) != len(self.perm) or any(s not in (1, -1) for s in self.signs):
            raise ValueError("signs must be +/-1, one per symbol")

    @property
    def s(self) -> int:
        return len(self.perm)


def build_mask(s: int, rng) -> SymbolMask:
    """Uniform permutation (Fisher-Yates, descending index) plus fair signs.

    Draw order: one randrange per swap position i = s-1 .. 1, then one
    two-way draw per index 0 .. s-1.
    """
    if s < 1:
        raise ValueError(f"need at least one symbol, got {s}")
    perm = list(range(s))
    for i in range(s - 1, 0, -1):
        j = rng.randrange(i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    signs = tuple(1 if rng.randrange(2) == 0 else -1 for _ in range(s))
    return SymbolMask(tuple(perm), signs)


@dataclass(frozen=True)
class Expression:
    """One transmitted query row: signed sum of raw function symbols.

    terms are (function, raw symbol, coefficient), sorted by function, all
    functions distinct; ``t`` is the round, equal to the term count.
    """

    terms: tuple[tuple[int, int, int], ...]
    t: int


@dataclass(eq=False)
class PlanRow:
    """Internal pre-elimination row.

    ``cells`` are this row's fresh contributions: (function, slot, sign).
    Starred rows additionally subtract ``side`` (a previous-round row fetched
    from another server); their transmitted form is cells - side.cells.
    """

    server: int
    t: int
    type: tuple[int, ...]
    instance: int
    starred: bool
    cells: tuple[tuple[int, int, int], ...]
    side: "PlanRow | None" = None
    kept: bool = False
    expr_index: int = -1


@dataclass
class PlanRound:
    server: int
    t: int
    rows: list[PlanRow]
    by_type: list[list[PlanRow]]  # [type position][instance]


@dataclass
class BlockStructure:
    """Full pre-elimination plan for all servers."""

    n_servers: int
    f_count: int
    f_star: int
    mask: SymbolMask
    rounds: list[list[PlanRound]]  # [server][t-1]

    @property
    def s(self) -> int:
        return self.mask.s


@dataclass
class RoundPattern:
    """Per-round keep/drop decision, shared by every server and instance.

    ``certificates[p]`` expresses dropped type p over kept types within the
    same instance: a list of (kept type position, coefficient).
    """

    types: tuple[tuple[int, ...], ...]
    kept: list[bool]
    certificates: dict[int, list[tuple[int, int]]]
    instances: int


@dataclass
class PcPlan:
    n_servers: int
    f_count: int
    rank: int
    f_star: int
    mask: SymbolMask
    betas: tuple[tuple[int, ...], ...]
    blocks: BlockStructure
    patterns: list[RoundPattern]
    per_server: list[list[Expression]]
    drop_counts: list[list[int]]
    kept_per_server: int

    @property
    def s(self) -> int:
        return self.mask.s


@dataclass(frozen=True)
class PcAnswer:
    """Per-server evaluation results, aligned with the plan's expressions."""

    symbols: tuple[int, ...]


def generate_full_blocks(n_servers: int, f_count: int, f_star: int, mask: SymbolMask,
                         rng=None, limits: GuardLimits = DEFAULT_LIMITS) -> BlockStructure:
    """Build the symmetric pre-elimination structure for all servers.

    The construction is deterministic given (N, F, f_star); randomness enters
    only through the mask, so ``rng`` is accepted for interface symmetry but
    never drawn from.

    Round 1 gives each server one fresh slot carrying a singleton of every
    function.  Round t >= 2 gives server n one fresh slot per off-star
    (t-1)-sum downloaded at the other servers in round t-1; that slot's
    starred sum pairs a fresh starred symbol against the downloaded sum, and
    the fresh off-star t-sums are spread over the same slots so that the sum
    avoiding function u reuses, for each member, the slot associated with the
    rest of its members.  Every slot is consumed by exactly one block, and
    every slot carries exactly one starred cell.
    """
    if not (0 <= f_star < f_count):
        raise ValueError(f"starred index {f_star} out of range for {f_count} functions")
    if n_servers < 1:
        raise ValueError(f"need at least one server, got {n_servers}")
    check_size_guard(n_servers, f_count, 1, limits)
    s_total = n_servers ** f_count
    if mask.s != s_total:
        raise ValueError(f"mask covers {mask.s} symbols, plan needs {s_total}")

    others = [g for g in range(f_count) if g != f_star]
    all_types = {t: list(combinations(range(f_count), t)) for t in range(1, f_count + 1)}
    rounds: list[list[PlanRound]] = [[] for _ in range(n_servers)]
    # off-star rows of the previous round, per server, keyed by type
    ext_prev: list[dict[tuple[int, ...], list[PlanRow]]] = [{} for _ in range(n_servers)]
    slot_counter = 0

    for t in range(1, f_count + 1):
        ext_here: list[dict[tuple[int, ...], list[PlanRow]]] = [{} for _ in range(n_servers)]
        for n in range(n_servers):
            rows_by_type: dict[tuple[int, ...], list[PlanRow]] = {}
            if t == 1:
                slot = slot_counter
                slot_counter += 1
                for g in range(f_count):
                    row = PlanRow(n, 1, (g,), 0, g == f_star, ((g, slot, 1),))
                    rows_by_type[(g,)] = [row]
                    if g != f_star:
                        ext_here[n].setdefault((g,), []).append(row)
            else:
                # fresh slots, one per side-information instance, keyed by the
                # off-star (t-1)-subset it serves
                slots_by_sub: dict[tuple[int, ...], list[int]] = {}
                for sub in combinations(others, t - 1):
                    slots = []
                    star_type = tuple(sorted(sub + (f_star,)))
                    inst_rows = []
                    for src in range(n_servers):
                        if src == n:
                            continue
                        inst_rows.extend(ext_prev[src].get(sub, ()))
                    for j, side_row in enumerate(inst_rows):
                        slot = slot_counter
                        slot_counter += 1
                        slots.append(slot)
                        inst = PlanRow(n, t, star_type, j, True,
                                       ((f_star, slot, 1),), side=side_row)
                        rows_by_type.setdefault(star_type, []).append(inst)
                    slots_by_sub[sub] = slots
                n_inst = (n_servers - 1) ** (t - 1)
                for sub, slots in slots_by_sub.items():
                    if len(slots) != n_inst:
                        raise InternalInvariant(
                            f"round {t} expected {n_inst} side instances for {sub}, got {len(slots)}")
                for full in combinations(others, t):
                    for j in range(n_inst):
                        cells = []
                        for pos, u in enumerate(full):
                            rest = tuple(g for g in full if g != u)
                            sign = 1 if pos % 2 == 0 else -1
                            cells.append((u, slots_by_sub[rest][j], sign))
                        row = PlanRow(n, t, full, j, False, tuple(cells))
                        rows_by_type.setdefault(full, []).append(row)
                        ext_here[n].setdefault(full, []).append(row)
            ordered_types = [tt for tt in all_types[t] if tt in rows_by_type]
            rows: list[PlanRow] = []
            by_type: list[list[PlanRow]] = []
            for tt in ordered_types:
                by_type.append(rows_by_type[tt])
                rows.extend(rows_by_type[tt])
            rounds[n].append(PlanRound(n, t, rows, by_type))
        ext_prev = ext_here

    if slot_counter != s_total:
        raise InternalInvariant(f"allocated {slot_counter} slots for {s_total} symbols")
    return BlockStructure(n_servers, f_count, f_star, mask, rounds)


def _round_rows_abstract(betas: Sequence[Sequence[int]], f_star: int, t: int,
                         q: int) -> tuple[list[tuple[int, ...]], list[list[int]], int]:
    """Reduced per-instance row vectors for round t.

    Columns are (off-star (t-1)-subset) x rank coordinates.  Starred rows
    reduce, modulo everything downloadable in earlier rounds, to the starred
    coefficient vector at their own slot; off-star rows are their fresh cells.
    """
    f_count = len(betas)
    r = len(betas[0])
    others = [g for g in range(f_count) if g != f_star]
    subs = list(combinations(others, t - 1))
    col_of = {sub: i for i, sub in enumerate(subs)}
    width = len(subs) * r
    types = list(combinations(range(f_count), t))
    rows = []
    for tt in types:
        vec = [0] * width
        if f_star in tt:
            sub = tuple(g for g in tt if g != f_star)
            base = col_of[sub] * r
            for i in range(r):
                vec[base + i] = betas[f_star][i] % q
        else:
            for pos, u in enumerate(tt):
                rest = tuple(g for g in tt if g != u)
                base = col_of[rest] * r
                sign = 1 if pos % 2 == 0 else -1
                for i in range(r):
                    vec[base + i] = (vec[base + i] + sign * betas[u][i]) % q
        rows.append(vec)
    return types, rows, width


def _greedy_python(rows: list[list[int]], order: Sequence[int], q: int):
    width = len(rows[0]) if rows else 0
    basis: list[tuple[int, list[int], dict[int, int]]] = []
    kept = [False] * len(rows)
    certs: dict[int, list[tuple[int, int]]] = {}
    for pos in order:
        vec = list(rows[pos])
        combo = {pos: 1}
        for pcol, bvec, bcombo in basis:
            c = vec[pcol]
            if c:
                for i in range(width):
                    vec[i] = (vec[i] - c * bvec[i]) % q
                for kpos, kc in bcombo.items():
                    combo[kpos] = (combo.get(kpos, 0) - c * kc) % q
        pivot = next((i for i, v in enumerate(vec) if v), None)
        if pivot is None:
            certs[pos] = [(kp, (-co) % q) for kp, co in combo.items()
                          if kp != pos and co % q]
        else:
            inv = pow(vec[pivot], -1, q)
            vec = [(v * inv) % q for v in vec]
            combo = {kp: (co * inv) % q for kp, co in combo.items()}
            basis.append((pivot, vec, combo))
            kept[pos] = True
    return kept, certs


def _greedy_numpy(rows: list[list[int]], order: Sequence[int], q: int):
    n_rows = len(rows)
    width = len(rows[0]) if rows else 0
    kept = [False] * n_rows
    certs: dict[int, list[tuple[int, int]]] = {}
    pivots: list[tuple[int, np.ndarray]] = []
    for pos in order:
        vec = np.zeros(width + n_rows, dtype=np.int64)
        vec[:width] = rows[pos]
        vec[width + pos] = 1
        for pcol, pvec in pivots:
            c = int(vec[pcol])
            if c:
                vec = (vec - c * pvec) % q
        nz = np.nonzero(vec[:width])[0]
        if nz.size == 0:
            combo = vec[width:]
            certs[pos] = [(int(kp), int((-combo[kp]) % q))
                          for kp in np.nonzero(combo)[0] if kp != pos]
        else:
            pivot = int(nz[0])
            vec = (vec * pow(int(vec[pivot]), -1, q)) % q
            pivots.append((pivot, vec))
            kept[pos] = True
    return kept, certs


def _round_pattern(betas: Sequence[Sequence[int]], f_star: int, t: int,
                   instances: int, q: int, keep_bias: int = 0) -> RoundPattern:
    types, rows, width = _round_rows_abstract(betas, f_star, t, q)
    order = list(range(len(types)))
    if keep_bias and t == 1:
        # test hook: demand-dependent processing order (breaks the shape
        # symmetry on purpose; see the audit power checks)
        order = order[keep_bias % len(order):] + order[:keep_bias % len(order)]
    if len(rows) * len(rows) * max(width, 1) > 2_000_000:
        kept, certs = _greedy_numpy(rows, order, q)
    else:
        kept, certs = _greedy_python(rows, order, q)
    return RoundPattern(tuple(types), kept, certs, instances)


def eliminate_redundancy(blocks: BlockStructure, betas: Sequence[Sequence[int]],
                         rank: int, field: PrimeField,
                         limits: GuardLimits = DEFAULT_LIMITS,
                         keep_bias: int = 0) -> PcPlan:
    """Greedy rank pass over the canonical row order; builds the final plan.

    A row is kept iff it adds rank over the kept rows before it, counting as
    already known everything the other servers deliver in earlier rounds.
    Because each block's fresh slots are disjoint from every other block and
    earlier-round rows span the same space whether or not they were kept, the
    decision reduces to an identical small system per round, replicated over
    servers and side-information instances; that system is what gets solved
    here.  The kept total must land exactly on S * sum_{t<=r} N^-t per
    server, anything else raises InternalInvariant.
    """
    n_servers = blocks.n_servers
    f_count = blocks.f_count
    q = field.q
    betas = tuple(tuple(b % q for b in row) for row in betas)
    if len(betas) != f_count or any(len(row) != rank for row in betas):
        raise ValueError(f"need {f_count} coefficient rows of length {rank}")
    got_rank = matrix_rank(betas, field)
    if got_rank != rank:
        raise ValueError(f"coefficient rows have rank {got_rank}, expected {rank}")
    s_total = check_size_guard(n_servers, f_count, rank, limits)

    patterns: list[RoundPattern] = []
    for t in range(1, f_count + 1):
        instances = (n_servers - 1) ** (t - 1)
        patterns.append(_round_pattern(betas, blocks.f_star, t, instances, q,
                                       keep_bias=keep_bias))

    mask = blocks.mask
    per_server: list[list[Expression]] = []
    drop_counts: list[list[int]] = []
    for n in range(n_servers):
        exprs: list[Expression] = []
        drops: list[int] = []
        for t in range(1, f_count + 1):
            pat = patterns[t - 1]
            block = blocks.rounds[n][t - 1]
            dropped_here = 0
            kept_by_type = {tt: pat.kept[i] for i, tt in enumerate(pat.types)}
            for row in block.rows:
                if kept_by_type[row.type]:
                    row.kept = True
                    row.expr_index = len(exprs)
                    exprs.append(_transmit(row, mask, q))
                else:
                    # reset explicitly: block structures may be reused across
                    # elimination passes with different tables
                    row.kept = False
                    row.expr_index = -1
                    dropped_here += 1
            drops.append(dropped_here)
        per_server.append(exprs)
        drop_counts.append(drops)

    expected = sum(n_servers ** (f_count - t) for t in range(1, rank + 1))
    for n in range(n_servers):
        if len(per_server[n]) != expected:
            raise InternalInvariant(
                f"server {n} keeps {len(per_server[n])} rows, formula says {expected}")
    if drop_counts.count(drop_counts[0]) != n_servers:
        raise InternalInvariant("asymmetric drop counts across servers")

    return PcPlan(n_servers, f_count, rank, blocks.f_star, mask, betas, blocks,
                  patterns, per_server, drop_counts, expected)


def _transmit(row: PlanRow, mask: SymbolMask, q: int) -> Expression:
    terms = []
    for g, slot, sign in row.cells:
        terms.append((g, mask.perm[slot], (sign * mask.signs[slot]) % q))
    if row.side is not None:
        for g, slot, sign in row.side.cells:
            terms.append((g, mask.perm[slot], (-sign * mask.signs[slot]) % q))
    terms.sort()
    return Expression(tuple(terms), row.t)


def pc_answer(expressions: Sequence[Expression], y_streams, field: PrimeField) -> list[int]:
    """Evaluate each expression against the function symbol streams.

    ``y_streams`` is indexable as y[function][symbol]; any function the plan
    mentions must be present and every stream must cover the symbol range.
    """
    q = field.q
    f_count = len(y_streams)
    out = []
    for expr in expressions:
        acc = 0
        for g, sym, coeff in expr.terms:
            if not (0 <= g < f_count):
                raise BadIndex(f"function {g} out of range")
            stream = y_streams[g]
            if not (0 <= sym < len(stream)):
                raise BadIndex(f"symbol {sym} out of range for function {g}")
            acc += coeff * int(stream[sym])
        out.append(acc % q)
    return out


def pc_decode(plan: PcPlan, answers: Sequence[Sequence[int]], field: PrimeField) -> list[int]:
    """Recover every raw symbol of the starred function from the answers.

    Walks rounds in order: kept rows take their downloaded value (starred
    rows add back the side sum fetched elsewhere), dropped rows are
    reconstructed per instance from the round's certificate, and each slot's
    starred cell then yields one raw symbol through the mask.
    """
    q = field.q
    mask = plan.mask
    n_servers = plan.n_servers
    if len(answers) != n_servers:
        raise Undecodable(f"expected answers from {n_servers} servers, got {len(answers)}")
    for n in range(n_servers):
        if len(answers[n]) != len(plan.per_server[n]):
            raise Undecodable(
                f"server {n} sent {len(answers[n])} symbols, plan has {len(plan.per_server[n])}")
    reduced: dict[int, int] = {}  # id(PlanRow) -> value of the row's fresh cells
    raw = [-1] * plan.s
    for t in range(1, plan.f_count + 1):
        pat = plan.patterns[t - 1]
        pos_of = {tt: i for i, tt in enumerate(pat.types)}
        for n in range(n_servers):
            block = plan.blocks.rounds[n][t - 1]
            for row in block.rows:
                if not row.kept:
                    continue
                v = int(answers[n][row.expr_index]) % q
                if row.side is not None:
                    v = (v + reduced[id(row.side)]) % q
                reduced[id(row)] = v
            insts_of = {insts[0].type: insts for insts in block.by_type if insts}
            for tt, insts in insts_of.items():
                p = pos_of[tt]
                if pat.kept[p]:
                    continue
                cert = pat.certificates[p]
                for j, row in enumerate(insts):
                    acc = 0
                    for kept_pos, lam in cert:
                        acc += lam * reduced[id(insts_of[pat.types[kept_pos]][j])]
                    reduced[id(row)] = acc % q
            for row in block.rows:
                if row.starred:
                    g, slot, _sign = row.cells[0]
                    val = reduced.get(id(row))
                    if val is None:
                        raise Undecodable(f"no value for slot {slot}")
                    sgn = mask.signs[slot]
                    raw_index = mask.perm[slot]
                    raw[raw_index] = (sgn * val) % q
    if any(v < 0 for v in raw):
        raise Undecodable("some raw symbols were never pinned")
    return raw
