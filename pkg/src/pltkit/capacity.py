"""Closed-form download-rate formulas, all in exact rational arithmetic.

Setting: N non-colluding servers each hold the same K messages; the user
wants L independent linear combinations of a hidden size-D subset of them,
keeping the subset private from every single server.  This module knows the
exact capacity of the one-combination case, the general upper bounds, the
capacities of the two side-information retrieval problems this reduces to,
and the rates of the naive strategies worth comparing against.

No floats: every value is a ``fractions.Fraction``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

EXACT = "exact-capacity"
UPPER = "upper-bound"
NOT_COVERED = "not-covered"


@dataclass(frozen=True)
class CapacityQuery:
    """Parameters of one rate question.

    n_servers >= 1, 1 <= dimension <= support <= k_messages, where
    ``support`` is the size of the hidden subset and ``dimension`` the number
    of independent combinations wanted.
    """

    n_servers: int
    k_messages: int
    dimension: int
    support: int

    def __post_init__(self):
        if self.n_servers < 1:
            raise ValueError(f"need at least one server, got {self.n_servers}")
        if not (1 <= self.dimension <= self.support <= self.k_messages):
            raise ValueError(
                f"need 1 <= L <= D <= K, got L={self.dimension} "
                f"D={self.support} K={self.k_messages}")


@dataclass(frozen=True)
class CapacityReport:
    value: Fraction
    kind: str  # EXACT or UPPER
    formula_tag: str

    def __post_init__(self):
        if not (0 < self.value <= 1):
            raise ValueError(f"rate {self.value} outside (0, 1]")


def phi(a: Fraction, b: int) -> Fraction:
    """(1 + a + a^2 + ... + a^(b-1))^(-1) for a > 0, b >= 1."""
    a = Fraction(a)
    if a <= 0:
        raise ValueError(f"need a positive ratio, got {a}")
    if b < 1:
        raise ValueError(f"need at least one term, got b={b}")
    total = Fraction(0)
    term = Fraction(1)
    for _ in range(b):
        total += term
        term *= a
    return 1 / total


def _interpolated_phi(inv_n: Fraction, theta: Fraction) -> Fraction:
    """(sum_{i<floor(theta)} x^i + (theta - floor(theta)) * x^floor(theta))^(-1).

    The fractional-exponent variant of ``phi``; agrees with phi(x, theta) when
    theta is an integer, and stays well defined at inv_n == 1.
    """
    whole = theta.numerator // theta.denominator
    frac = theta - whole
    total = Fraction(0)
    term = Fraction(1)
    for _ in range(whole):
        total += term
        term *= inv_n
    total += frac * term
    return 1 / total


def plt_upper_bound(query: CapacityQuery) -> CapacityReport:
    """Best known converse for the general (N, K, L, D) problem.

    Two regimes split on (K - D) / L relative to 1; at the boundary both
    expressions agree (asserted).  For integer (K - D) / L the bound collapses
    to phi(1/N, (K - D + L) / L).
    """
    n, k, l, d = query.n_servers, query.k_messages, query.dimension, query.support
    ratio = Fraction(k - d, l)
    low = 1 / (1 + Fraction(k - d, l * n))
    theta = Fraction(k - d + l, l)
    high = _interpolated_phi(Fraction(1, n), theta)
    if ratio < 1:
        return CapacityReport(low, UPPER, "converse/near-full-support")
    if ratio > 1:
        return CapacityReport(high, UPPER, "converse/general")
    if low != high:
        raise AssertionError(f"regime boundary mismatch: {low} != {high}")
    return CapacityReport(low, UPPER, "converse/boundary")


def plt_capacity_L1(n_servers: int, k_messages: int, support: int) -> CapacityReport:
    """Exact capacity of the one-combination (L = 1) problem."""
    query = CapacityQuery(n_servers, k_messages, 1, support)
    value = phi(Fraction(1, query.n_servers), k_messages - support + 1)
    return CapacityReport(value, EXACT, "one-combination")


def mpir_psi_capacity(n_servers: int, k_messages: int, wanted: int,
                      side: int) -> CapacityReport:
    """Multi-message retrieval with a private side-information set.

    P = ``wanted`` full messages are demanded, M = ``side`` other messages are
    already known, and the union of the two index sets must stay private.
    Exact when (K - M) / P <= 2 or integer; otherwise an upper bound.
    """
    if wanted < 1 or side < 0 or wanted + side > k_messages:
        raise ValueError(f"need P >= 1, M >= 0, P + M <= K; got P={wanted} M={side} K={k_messages}")
    if n_servers < 1:
        raise ValueError(f"need at least one server, got {n_servers}")
    ratio = Fraction(k_messages - side, wanted)
    exact_low = 1 / (1 + Fraction(k_messages - side - wanted, wanted * n_servers))
    if ratio <= 2:
        if ratio == 2:
            alt = phi(Fraction(1, n_servers), 2)
            if alt != exact_low:
                raise AssertionError(f"regime boundary mismatch: {exact_low} != {alt}")
        return CapacityReport(exact_low, EXACT, "side-info-multi/near-full")
    if ratio.denominator == 1:
        value = phi(Fraction(1, n_servers), int(ratio))
        return CapacityReport(value, EXACT, "side-info-multi/integer-ratio")
    value = _interpolated_phi(Fraction(1, n_servers), ratio)
    return CapacityReport(value, UPPER, "side-info-multi/bound")


def pir_psi_capacity(n_servers: int, k_messages: int, side: int) -> CapacityReport:
    """Single-message retrieval with M = ``side`` privately held messages."""
    if not (0 <= side <= k_messages - 1):
        raise ValueError(f"need 0 <= M <= K-1, got M={side} K={k_messages}")
    if n_servers < 1:
        raise ValueError(f"need at least one server, got {n_servers}")
    value = phi(Fraction(1, n_servers), k_messages - side)
    return CapacityReport(value, EXACT, "side-info-single")


def baseline_rates(query: CapacityQuery) -> dict[str, CapacityReport | None]:
    """Rates of the obvious alternative strategies, for comparison tables.

    - "mm-pir": fetch all D messages in full via multi-message retrieval and
      combine locally.  Exact when K/D <= 2 or K/D is an integer; otherwise
      None (no closed form in scope).
    - "pc-full": hide the demand among all degree-one functions of all K
      messages, ignoring the support restriction.
    - "mpir-then-combine": any strategy that first recovers the D messages
      individually cannot beat 1/D (only meaningful for D >= 2, else None).
    """
    n, k, d = query.n_servers, query.k_messages, query.support
    out: dict[str, CapacityReport | None] = {}

    ratio = Fraction(k, d)
    if ratio <= 2:
        out["mm-pir"] = CapacityReport(
            1 / (1 + Fraction(k - d, d * n)), EXACT, "multi-message/near-full")
    elif ratio.denominator == 1:
        out["mm-pir"] = CapacityReport(
            phi(Fraction(1, n), int(ratio)), EXACT, "multi-message/integer-ratio")
    else:
        out["mm-pir"] = None

    out["pc-full"] = CapacityReport(phi(Fraction(1, n), k), EXACT, "all-function-hiding")

    if d >= 2:
        out["mpir-then-combine"] = CapacityReport(
            Fraction(1, d), UPPER, "recover-then-combine")
    else:
        out["mpir-then-combine"] = None
    return out
