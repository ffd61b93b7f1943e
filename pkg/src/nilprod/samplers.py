"""Random constructions of nilpotent matrices and nil-chains.

Every sampler here produces members by construction; callers still
re-verify membership through :func:`nilprod.nilchain.is_nil_chain` or the
vectorized kernels.  Over Q all outputs are integral (scalar rescaling
preserves nilpotency of every subproduct, so adjugates replace inverses).
"""

from __future__ import annotations

import math

import numpy as np

from .exact import QQ, ExactMatrix, Field, determinant, inverse, kernel_basis, mat_pow
from .fixtures import witness_tuple
from .nilchain import ChainTuple

BOX = 2


def _entries(rng: np.random.Generator, fld: Field, shape, box: int = BOX) -> np.ndarray:
    if fld.is_rational:
        return rng.integers(-box, box + 1, size=shape)
    return rng.integers(0, fld.modulus, size=shape)


def content_normalize(m: ExactMatrix) -> ExactMatrix:
    """Divide an integral rational matrix by the gcd of its entries."""
    if not m.field.is_rational:
        return m
    g = 0
    for r in m.rows:
        for x in r:
            g = math.gcd(g, x)
    if g <= 1:
        return m
    return ExactMatrix(tuple(tuple(x // g for x in r) for r in m.rows), QQ, _trusted=True)


def random_invertible(d: int, fld: Field, rng: np.random.Generator, box: int = BOX) -> ExactMatrix:
    while True:
        p = ExactMatrix(_entries(rng, fld, (d, d), box).tolist(), fld)
        if determinant(p) != 0:
            return p


def random_unimodular(d: int, fld: Field, rng: np.random.Generator, steps: int = 3) -> ExactMatrix:
    """Product of a few elementary matrices ``I + c e_ij`` (integral inverse over Q)."""
    p = ExactMatrix.identity(d, fld)
    if d == 1:
        return p
    for _ in range(steps):
        i, j = rng.choice(d, size=2, replace=False)
        c = int(rng.choice([-1, 1])) if fld.is_rational else int(rng.integers(1, fld.modulus))
        e = [[int(a == b) for b in range(d)] for a in range(d)]
        e[i][j] = c
        p = p @ ExactMatrix(e, fld)
    return p


def conjugator(p: ExactMatrix) -> tuple[ExactMatrix, ExactMatrix]:
    """``(P, Q)`` with ``Q`` a nonzero multiple of ``P^-1`` (the adjugate over Q)."""
    pi = inverse(p)
    if p.field.is_rational:
        pi = pi.scale(determinant(p))
    return p, pi


def strictly_upper(d: int, fld: Field, rng: np.random.Generator, box: int = BOX) -> ExactMatrix:
    vals = _entries(rng, fld, (d, d), box)
    return ExactMatrix([[int(vals[i, j]) if j > i else 0 for j in range(d)] for i in range(d)], fld)


def random_nilpotent(d: int, fld: Field, rng: np.random.Generator, box: int = BOX) -> ExactMatrix:
    """Random strictly upper-triangular matrix conjugated by a random invertible one."""
    p, q = conjugator(random_invertible(d, fld, rng, box))
    return content_normalize(p @ strictly_upper(d, fld, rng, box) @ q)


def random_rank_one_nilpotent(d: int, fld: Field, rng: np.random.Generator, box: int = BOX) -> ExactMatrix:
    """``u v^T`` with ``v . u = 0``."""
    v = [int(x) for x in _entries(rng, fld, d, box)]
    basis = kernel_basis([v], fld) if any(v) else []
    u = _combine(basis, d, fld, rng)
    return content_normalize(ExactMatrix([[a * b for b in v] for a in u], fld))


def _combine(basis, d: int, fld: Field, rng: np.random.Generator) -> list:
    if not basis:
        return [0] * d
    coefs = [int(c) for c in _entries(rng, fld, len(basis), 3)]
    out = [sum(c * b[k] for c, b in zip(coefs, basis)) for k in range(d)]
    if fld.is_rational:
        den = 1
        for x in out:
            den = math.lcm(den, getattr(x, "denominator", 1))
        out = [int(x * den) for x in out]
        g = 0
        for x in out:
            g = math.gcd(g, x)
        out = [x // g for x in out] if g > 1 else out
    else:
        out = [x % fld.modulus for x in out]
    return out


def random_rank_one_chain(d: int, n: int, fld: Field, rng: np.random.Generator) -> ChainTuple:
    """Nil-chain of rank <= 1 factors ``u_j v_j^T`` built left to right.

    ``P(i, j)`` equals ``u_j v_i^T`` times the coupling
    ``prod_{k=i}^{j-1} (v_{k+1} . u_k)``, so it is nilpotent exactly when the
    coupling or ``v_i . u_j`` vanishes.  Each ``u_j`` is drawn from the
    common kernel of ``v_j`` and of every ``v_i`` with nonzero coupling.
    ``v_j`` is sometimes taken from the span of earlier ``v``'s so that the
    kernel stays nontrivial.
    """
    p = fld.modulus

    def dot(a, b):
        s = sum(x * y for x, y in zip(a, b))
        return s % p if p else s

    us: list[list] = []
    vs: list[list] = []
    for j in range(n):
        if vs and rng.random() < 0.5:
            v = _combine([tuple(x) for x in vs], d, fld, rng)
        else:
            v = [int(x) for x in _entries(rng, fld, d)]
        constraints = [v]
        coupling = 1
        for i in range(j - 1, -1, -1):
            coupling = coupling * dot(vs[i + 1] if i + 1 < j else v, us[i])
            if p:
                coupling %= p
            if coupling != 0:
                constraints.append(vs[i])
        rows = [c for c in constraints if any(x != 0 for x in c)]
        basis = kernel_basis(rows, fld, ncols=d)
        u = _combine(basis, d, fld, rng) if rng.random() > 0.1 else [0] * d
        us.append(u)
        vs.append(v)
    return ChainTuple(content_normalize(ExactMatrix([[a * b for b in v] for a in u], fld)) for u, v in zip(us, vs))


def common_triangular_chain(d: int, n: int, fld: Field, rng: np.random.Generator) -> ChainTuple:
    """Simultaneously strictly-upper-triangularizable tuple (always a nil-chain)."""
    p, q = conjugator(random_unimodular(d, fld, rng) if rng.random() < 0.5 else random_invertible(d, fld, rng))
    return ChainTuple(content_normalize(p @ strictly_upper(d, fld, rng) @ q) for _ in range(n))


def power_chain(d: int, n: int, fld: Field, rng: np.random.Generator) -> ChainTuple:
    """``(c_1 N^k_1, ..., c_n N^k_n)`` for one random nilpotent ``N``."""
    base = random_nilpotent(d, fld, rng)
    mats = []
    for _ in range(n):
        k = int(rng.integers(1, max(2, d)))
        c = int(rng.choice([-2, -1, 1, 2])) if fld.is_rational else int(rng.integers(1, fld.modulus))
        mats.append(content_normalize(mat_pow(base, k).scale(c)))
    return ChainTuple(mats)


def fixture_window(n: int, fld: Field, rng: np.random.Generator) -> ChainTuple:
    """Contiguous window of the 3x3 length-4 witness, conjugated and rescaled (needs n <= 4)."""
    base = witness_tuple(fld)
    if n > len(base):
        raise ValueError("window longer than the fixture")
    start = int(rng.integers(0, len(base) - n + 1))
    p, q = conjugator(random_unimodular(3, fld, rng))
    mats = []
    for m in base[start : start + n]:
        c = int(rng.choice([-1, 1])) if fld.is_rational else int(rng.integers(1, fld.modulus))
        mats.append(content_normalize((p @ m @ q).scale(c)))
    return ChainTuple(mats)


GENERATORS = {
    "triangular": common_triangular_chain,
    "power": power_chain,
    "rank-one": random_rank_one_chain,
}
