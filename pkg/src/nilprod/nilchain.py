"""Nil-chains: tuples of matrices all of whose ordered subproducts are nilpotent.

For a tuple ``(A_1, ..., A_n)`` the subproduct ``P(a, b)`` is
``A_b A_(b-1) ... A_a`` (1-based, ``a <= b``) and the chain product is
``P(1, n) = A_n ... A_1``.  Every tuple of length at least
``upper_bound_N(d)`` whose subproducts are all nilpotent has zero chain
product; :func:`rank_descent_certificate` replays the block-grouping argument
behind that bound with exact ranks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .exact import QQ, ExactMatrix, Field, FieldMismatchError, inverse, is_nilpotent, kernel_basis, rank


class NotNilChainError(ValueError):
    """A subproduct that should be nilpotent is not."""

    def __init__(self, alpha: int, beta: int, message: str | None = None):
        self.alpha, self.beta = alpha, beta
        super().__init__(message or f"subproduct P({alpha},{beta}) is not nilpotent")


class VanishingViolation(RuntimeError):
    """A rank bound from the vanishing argument failed on a verified nil-chain."""


class ChainTuple:
    """Ordered tuple ``(A_1, ..., A_n)`` with a lazily filled subproduct table."""

    def __init__(self, matrices: Iterable[ExactMatrix]):
        mats = tuple(matrices)
        if not mats:
            raise ValueError("a chain needs at least one matrix")
        d, fld = mats[0].d, mats[0].field
        for m in mats:
            if m.field != fld:
                raise FieldMismatchError(f"mixed fields {fld} and {m.field}")
            if m.d != d:
                raise ValueError(f"mixed dimensions {d} and {m.d}")
        self.matrices = mats
        self._cache: dict[tuple[int, int], ExactMatrix] = {}

    @property
    def n(self) -> int:
        return len(self.matrices)

    @property
    def d(self) -> int:
        return self.matrices[0].d

    @property
    def field(self) -> Field:
        return self.matrices[0].field

    def __len__(self):
        return len(self.matrices)

    def __iter__(self):
        return iter(self.matrices)

    def __getitem__(self, i):
        return self.matrices[i]

    def __repr__(self):
        return f"ChainTuple(n={self.n}, d={self.d}, field={self.field.name})"

    def subproduct(self, alpha: int, beta: int) -> ExactMatrix:
        """``A_beta ... A_alpha`` (1-based, inclusive)."""
        if not 1 <= alpha <= beta <= self.n:
            raise IndexError(f"need 1 <= alpha <= beta <= {self.n}, got ({alpha}, {beta})")
        key = (alpha, beta)
        hit = self._cache.get(key)
        if hit is None:
            if alpha == beta:
                hit = self.matrices[alpha - 1]
            else:
                hit = self.matrices[beta - 1] @ self.subproduct(alpha, beta - 1)
            self._cache[key] = hit
        return hit

    def to_json(self):
        out = {"matrices": [[[self.field.format(x) for x in r] for r in m.rows] for m in self.matrices]}
        out["modulus"] = self.field.modulus
        return out

    @classmethod
    def from_json(cls, obj, field: Field | None = None) -> "ChainTuple":
        """Accept ``{"modulus": p|null, "matrices": [...]}`` or a bare list of matrices."""
        if isinstance(obj, dict):
            mod = obj.get("modulus")
            fld = Field(mod) if mod is not None else (field or QQ)
            mats = obj["matrices"]
        else:
            fld, mats = field or QQ, obj
        return cls(ExactMatrix.from_json(m, fld) for m in mats)


def first_non_nilpotent(t: ChainTuple) -> tuple[int, int] | None:
    """``(alpha, beta)`` of the first non-nilpotent subproduct by increasing length, else None."""
    for length in range(1, t.n + 1):
        for alpha in range(1, t.n - length + 2):
            beta = alpha + length - 1
            if not is_nilpotent(t.subproduct(alpha, beta)):
                return alpha, beta
    return None


def is_nil_chain(t: ChainTuple) -> bool:
    return first_non_nilpotent(t) is None


def chain_product(t: ChainTuple) -> ExactMatrix:
    return t.subproduct(1, t.n)


def upper_bound_N(d: int) -> int:
    """``C(d,1) C(d,2) ... C(d,d-1)``; 1 when ``d == 1``."""
    if d < 1:
        raise ValueError("d must be positive")
    return math.prod(math.comb(d, l) for l in range(1, d))


def best_known_N(d: int) -> int:
    """Smallest length known to force vanishing: exact for d <= 3, the product bound otherwise."""
    return {1: 1, 2: 2, 3: 5}.get(d, upper_bound_N(d))


def block_rank_check(t: ChainTuple, r: int) -> int:
    """Rank of the product of a ``C(d, r)``-tuple whose first ``C(d,r) - 1`` factors have rank <= r.

    Raises :class:`VanishingViolation` if the rank is not below ``r``.
    """
    d = t.d
    C = math.comb(d, r)
    if t.n != C:
        raise ValueError(f"need a tuple of length C({d},{r}) = {C}, got {t.n}")
    for j, m in enumerate(t.matrices[:-1], start=1):
        if rank(m) > r:
            raise ValueError(f"factor {j} has rank {rank(m)} > {r}")
    bad = first_non_nilpotent(t)
    if bad is not None:
        raise NotNilChainError(*bad)
    k = rank(chain_product(t))
    if k >= r:
        raise VanishingViolation(f"product rank {k} is not below {r}")
    return k


@dataclass
class DescentStage:
    level: int
    block_length: int
    bound: int
    ranks: list[int]
    products: list[ExactMatrix] = field(repr=False)

    def to_json(self):
        return {
            "level": self.level,
            "block_length": self.block_length,
            "rank_bound": self.bound,
            "ranks": self.ranks,
            "products": [p.to_json() for p in self.products],
        }


@dataclass
class DescentCertificate:
    d: int
    n: int
    length_bound: int
    stages: list[DescentStage]
    final_rank: int

    def to_json(self):
        return {
            "d": self.d,
            "n": self.n,
            "length_bound": self.length_bound,
            "stages": [s.to_json() for s in self.stages],
            "final_rank": self.final_rank,
        }


def rank_descent_certificate(t: ChainTuple) -> DescentCertificate:
    """Exact staged rank descent for a nil-chain of length >= ``upper_bound_N(d)``.

    Stage 0 records the single factors (rank <= d-1).  Stage ``l`` groups the
    first ``N`` factors into consecutive blocks of length
    ``r(l) = C(d,1) ... C(d,l)`` and records each block product, whose rank
    must be at most ``d - l - 1``.  The final stage therefore certifies that
    the product of the first ``N`` factors, hence the whole chain product,
    vanishes.
    """
    d, n = t.d, t.n
    N = upper_bound_N(d)
    if n < N:
        raise ValueError(f"tuple length {n} is below the vanishing length {N} for d={d}")
    bad = first_non_nilpotent(t)
    if bad is not None:
        raise NotNilChainError(*bad)

    def stage(level: int, block: int, bound: int) -> DescentStage:
        prods = [t.subproduct(block * (j - 1) + 1, block * j) for j in range(1, N // block + 1)]
        ranks = [rank(p) for p in prods]
        worst = max(ranks)
        if worst > bound:
            raise VanishingViolation(
                f"stage {level}: block of length {block} has rank {worst} > {bound}"
            )
        return DescentStage(level, block, bound, ranks, prods)

    stages = [stage(0, 1, d - 1)]
    block = 1
    for level in range(1, d):
        block *= math.comb(d, level)
        stages.append(stage(level, block, d - level - 1))
    final = rank(chain_product(t))
    if final != 0:
        raise VanishingViolation(f"chain product has rank {final}")
    return DescentCertificate(d, n, N, stages, final)


@dataclass(frozen=True)
class SandwichBranch:
    """Outcome of :func:`rank_one_sandwich_check`.

    ``branch`` is ``"AB"`` when ``A B = scalar * B`` and ``"BC"`` when
    ``B C = scalar * B``; ``ab_holds``/``bc_holds`` report both identities
    with their own scalars.
    """

    branch: str
    scalar: object
    ab_holds: bool
    bc_holds: bool
    ab_scalar: object
    bc_scalar: object

    @property
    def holds(self) -> bool:
        return self.ab_holds or self.bc_holds


def _basis_change_to_elementary(b: ExactMatrix) -> ExactMatrix:
    """Invertible ``Q`` with ``Q^-1 B Q = E_23`` for a rank-one nilpotent 3x3 ``B``."""
    fld = b.field
    k = next(j for j in range(3) if any(b[i, j] != 0 for i in range(3)))
    f3 = tuple(int(i == k) for i in range(3))
    f2 = tuple(b[i, k] for i in range(3))
    f1 = None
    for v in kernel_basis(b.rows, fld):
        if rank(ExactMatrix([v, f2, f3], fld)) == 3:
            f1 = v
            break
    if f1 is None:
        raise ArithmeticError("kernel of B does not complement its image")
    return ExactMatrix(list(zip(f1, f2, f3)), fld)


def rank_one_sandwich_check(a: ExactMatrix, b: ExactMatrix, c: ExactMatrix) -> SandwichBranch:
    """For ``(C, B, A)`` a 3x3 nil-chain with ``rank(B) == 1``: ``AB = lam B`` or ``BC = lam B``.

    Conjugates ``B`` to the elementary matrix ``E_23`` and reads ``lam`` off
    the conjugated ``A`` (entry (2,2)) or ``C`` (entry (3,3)); the identity is
    then re-checked in the original basis.
    """
    if a.d != 3 or b.d != 3 or c.d != 3:
        raise ValueError("the sandwich identity is stated for 3x3 matrices")
    t = ChainTuple((c, b, a))
    bad = first_non_nilpotent(t)
    if bad is not None:
        raise NotNilChainError(*bad, message=f"(C, B, A) is not a nil-chain: P{bad} not nilpotent")
    if rank(b) != 1:
        raise ValueError(f"B must have rank 1, got {rank(b)}")
    q = _basis_change_to_elementary(b)
    qi = inverse(q)
    a2, c2 = qi @ a @ q, qi @ c @ q
    coef_b, coef_e = a2[0, 1], a2[1, 1]
    coef_v, coef_x = c2[2, 0], c2[2, 2]
    ab = a @ b
    bc = b @ c
    ab_holds = ab == b.scale(coef_e)
    bc_holds = bc == b.scale(coef_x)
    if coef_b == 0 and not ab_holds or coef_v == 0 and not bc_holds:
        raise ArithmeticError("identity failed after the change of basis")
    if not (ab_holds or bc_holds):
        raise VanishingViolation("neither AB nor BC is a multiple of B")
    branch, scalar = ("AB", coef_e) if coef_b == 0 else ("BC", coef_x)
    return SandwichBranch(branch, scalar, ab_holds, bc_holds, coef_e, coef_x)


def conjugate(t: Sequence[ExactMatrix], p: ExactMatrix) -> ChainTuple:
    pi = inverse(p)
    return ChainTuple(p @ m @ pi for m in t)
