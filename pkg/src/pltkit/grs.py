"""User-side query material: evaluation points, column multipliers, and the
per-subset combination table.

The user picks K distinct evaluation points (one per message) and a nonzero
multiplier per column.  Multipliers on the demanded support are forced so
that the demanded combination appears, scaled, among the virtual functions;
the rest are random.  The r = K - D + 1 query vectors are the scaled
Vandermonde rows on those points; each size-D subset of messages then owns a
one-dimensional scalar class of coefficient vectors whose induced function is
supported exactly on that subset (q - 1 choices), realized here through the
annihilator polynomial of the subset's complement.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Mapping, Sequence

from .fields import Poly, PrimeField


class FieldTooSmall(ValueError):
    """The field cannot supply K distinct evaluation points."""


@dataclass(frozen=True)
class Demand:
    """A single target combination: nonzero coefficients on a hidden subset.

    ``support`` holds 1-based message indices, strictly increasing;
    ``coeffs[i]`` is the nonzero coefficient of message support[i].
    """

    support: tuple[int, ...]
    coeffs: tuple[int, ...]
    field: PrimeField

    def __post_init__(self):
        if len(self.support) != len(self.coeffs) or not self.support:
            raise ValueError("support and coefficients must be non-empty and aligned")
        if list(self.support) != sorted(set(self.support)) or self.support[0] < 1:
            raise ValueError(f"support must be strictly increasing 1-based indices, got {self.support}")
        for c in self.coeffs:
            if c % self.field.q == 0:
                raise ValueError("demand coefficients must be nonzero")
        object.__setattr__(self, "coeffs", tuple(c % self.field.q for c in self.coeffs))

    @property
    def d(self) -> int:
        return len(self.support)


@dataclass(frozen=True)
class GrsSecret:
    """Evaluation points, column multipliers, and the support's annihilator."""

    omegas: tuple[int, ...]
    alphas: tuple[int, ...]
    p_poly: Poly


@dataclass(frozen=True)
class SuperMessageSpec:
    """The r x K query-vector matrix defining the virtual messages."""

    q_vectors: tuple[tuple[int, ...], ...]

    @property
    def r(self) -> int:
        return len(self.q_vectors)

    @property
    def k(self) -> int:
        return len(self.q_vectors[0])


@dataclass(frozen=True)
class FunctionTable:
    """One combination vector per size-D subset, in subset-enumeration order.

    ``betas[f]`` has length r; ``star_index`` is the 0-based position of the
    demanded subset; ``star_scalar`` relates the starred virtual function to
    the demand: Y_star = star_scalar * (demanded combination).
    """

    subsets: tuple[tuple[int, ...], ...]
    betas: tuple[tuple[int, ...], ...]
    star_index: int
    star_scalar: int


_POOL_SAMPLING_MAX_Q = 1 << 16


def choose_omegas(field: PrimeField, k: int, rng,
                  fixed: Sequence[int] | None = None) -> tuple[int, ...]:
    """K distinct field elements, sampled without replacement (or overridden).

    Draw order for small fields: one ``randrange`` over a shrinking pool per
    position.  Large fields rejection-sample instead of materializing the
    pool.  q == k is allowed (the points then exhaust the field).
    """
    if k < 1:
        raise ValueError(f"need at least one point, got k={k}")
    if field.q < k:
        raise FieldTooSmall(f"GF({field.q}) cannot hold {k} distinct points")
    if fixed is not None:
        vals = tuple(v % field.q for v in fixed)
        if len(vals) != k or len(set(vals)) != k:
            raise ValueError(f"override must give {k} distinct points, got {fixed}")
        return vals
    if field.q > _POOL_SAMPLING_MAX_Q:
        seen: set[int] = set()
        out = []
        while len(out) < k:
            v = rng.randrange(field.q)
            if v not in seen:
                seen.add(v)
                out.append(v)
        return tuple(out)
    pool = list(range(field.q))
    out = []
    for _ in range(k):
        j = rng.randrange(len(pool))
        out.append(pool.pop(j))
    return tuple(out)


def build_secret(demand: Demand, omegas: Sequence[int], field: PrimeField, rng,
                 free_alphas: Mapping[int, int] | None = None) -> GrsSecret:
    """Fix the column multipliers around the demand.

    p is the monic annihilator of the off-support points.  On the support,
    alpha_j = v_j / p(omega_j); elsewhere alpha_j is a random nonzero element
    (drawn in ascending column order), unless overridden via ``free_alphas``
    (1-based column -> value).
    """
    k = len(omegas)
    support = set(demand.support)
    if max(support) > k:
        raise ValueError(f"demand support {demand.support} exceeds k={k}")
    off = [omegas[j - 1] for j in range(1, k + 1) if j not in support]
    p = Poly.from_roots(off, field)
    alphas = []
    coeff_by_col = dict(zip(demand.support, demand.coeffs))
    overrides = dict(free_alphas or {})
    for j in range(1, k + 1):
        if j in support:
            alphas.append(field.div(coeff_by_col[j], p.eval(omegas[j - 1])))
        elif j in overrides:
            v = overrides[j] % field.q
            if v == 0:
                raise ValueError(f"multiplier override for column {j} must be nonzero")
            alphas.append(v)
        else:
            alphas.append(field.rand_nonzero(rng))
    return GrsSecret(tuple(omegas), tuple(alphas), p)


def build_q_vectors(secret: GrsSecret, k: int, d: int) -> SuperMessageSpec:
    """The r = k - d + 1 query vectors: row i is alpha_j * omega_j^i."""
    if not (1 <= d <= k):
        raise ValueError(f"need 1 <= d <= k, got d={d} k={k}")
    q = secret.p_poly.field.q
    r = k - d + 1
    rows = []
    for i in range(r):
        rows.append(tuple(
            (secret.alphas[j] * pow(secret.omegas[j], i, q)) % q for j in range(k)))
    return SuperMessageSpec(tuple(rows))


def enumerate_subsets(k: int, d: int) -> tuple[tuple[int, ...], ...]:
    """All size-d subsets of {1..k} in lexicographic order."""
    if not (1 <= d <= k):
        raise ValueError(f"need 1 <= d <= k, got d={d} k={k}")
    return tuple(combinations(range(1, k + 1), d))


def derive_beta(secret: GrsSecret, subset: Sequence[int], scalar: int,
                field: PrimeField) -> tuple[int, ...]:
    """Coefficient vector (length r) whose induced function is supported
    exactly on ``subset``: scalar times the annihilator of the complement."""
    k = len(secret.omegas)
    scalar %= field.q
    if scalar == 0:
        raise ValueError("scalar class representative must be nonzero")
    chosen = set(subset)
    off = [secret.omegas[j - 1] for j in range(1, k + 1) if j not in chosen]
    g = Poly.from_roots(off, field).scale(scalar)
    r = k - len(chosen) + 1
    return g.padded(r)


def build_function_table(secret: GrsSecret, demand: Demand, k: int, field: PrimeField,
                         rng, scalar_overrides: Mapping[int, int] | None = None) -> FunctionTable:
    """One combination vector per subset, scalars drawn in subset order.

    ``scalar_overrides`` maps 0-based subset positions to fixed nonzero
    scalars (used by the walkthrough fixtures and tests).
    """
    subsets = enumerate_subsets(k, demand.d)
    overrides = dict(scalar_overrides or {})
    betas = []
    scalars = []
    for f in range(len(subsets)):
        if f in overrides:
            c = overrides[f] % field.q
            if c == 0:
                raise ValueError(f"scalar override for function {f} must be nonzero")
        else:
            c = field.rand_nonzero(rng)
        scalars.append(c)
        betas.append(derive_beta(secret, subsets[f], c, field))
    star_index = subsets.index(tuple(demand.support))
    return FunctionTable(subsets, tuple(betas), star_index, scalars[star_index])


def y_coefficients(spec: SuperMessageSpec, beta: Sequence[int], field: PrimeField) -> tuple[int, ...]:
    """Raw-message coefficient vector of the virtual function beta . Q."""
    k = spec.k
    out = []
    for j in range(k):
        acc = 0
        for i, b in enumerate(beta):
            acc += b * spec.q_vectors[i][j]
        out.append(acc % field.q)
    return tuple(out)
