from __future__ import annotations

import json
from fractions import Fraction

import numpy as np
import pytest
import sympy

from nilprod.exact import GF, QQ, ExactMatrix, char_coeffs, is_nilpotent, rank
from nilprod.fixtures import WITNESS_D3, WITNESS_D3_PRODUCT, load_fixture, witness_matrices, witness_tuple
from nilprod.nilchain import (
    ChainTuple,
    NotNilChainError,
    best_known_N,
    block_rank_check,
    chain_product,
    conjugate,
    first_non_nilpotent,
    is_nil_chain,
    rank_descent_certificate,
    rank_one_sandwich_check,
    upper_bound_N,
)
from nilprod.samplers import random_nilpotent, random_rank_one_chain, random_rank_one_nilpotent, random_unimodular

SHIFT3 = ExactMatrix([[0, 1, 0], [0, 0, 1], [0, 0, 0]])
E23 = ExactMatrix([[0, 0, 0], [0, 0, 1], [0, 0, 0]])


def sympy_is_nil_chain(mats):
    """Independent membership test: every ordered subproduct cubed is zero."""
    ms = [sympy.Matrix([[sympy.Rational(str(x)) for x in r] for r in m.rows]) for m in mats]
    n, d = len(ms), ms[0].shape[0]
    for a in range(n):
        p = ms[a]
        for b in range(a, n):
            if b > a:
                p = ms[b] * p
            if not (p**d).is_zero_matrix:
                return False
    return True


def test_fixture_matrices_by_hand():
    m = witness_matrices()
    assert (m["B"] @ m["C"]).rows == ((1, 1, 4), (-1, -1, -2), (0, 0, 0))
    assert rank(m["B"]) == 2
    assert char_coeffs(m["A"]) == (0, 0, 0)
    assert is_nilpotent(m["B"])


def test_fixture_is_witness():
    t = ChainTuple(witness_tuple())
    assert is_nil_chain(t)
    assert sympy_is_nil_chain(t.matrices)
    assert chain_product(t) == ExactMatrix(WITNESS_D3_PRODUCT)
    m = {k: sympy.Matrix(v) for k, v in WITNESS_D3.items()}
    assert m["A"] * m["B"] * m["C"] * m["D"] == sympy.Matrix(WITNESS_D3_PRODUCT)


@pytest.mark.parametrize("p", [3, 5, 7])
def test_fixture_witness_in_odd_characteristic(p):
    t = ChainTuple(witness_tuple(GF(p)))
    assert is_nil_chain(t)
    assert not chain_product(t).is_zero()


def test_fixture_product_vanishes_mod_two():
    assert chain_product(ChainTuple(witness_tuple(GF(2)))).is_zero()


def test_load_fixture_aliases():
    assert load_fixture("paper-d3") == load_fixture("witness-d3")
    with pytest.raises(ValueError):
        load_fixture("nope")


def test_membership_examples():
    I = ExactMatrix.identity(3)
    assert not is_nil_chain(ChainTuple((I, I)))
    assert first_non_nilpotent(ChainTuple((I, I))) == (1, 1)
    assert is_nil_chain(ChainTuple((SHIFT3, SHIFT3)))
    assert first_non_nilpotent(ChainTuple((SHIFT3, SHIFT3.transpose()))) == (1, 2)


def test_chain_product_examples():
    a = ExactMatrix([[1, 2, 0], [0, 1, 1], [3, 0, 1]])
    assert chain_product(ChainTuple((a,))) == a
    assert chain_product(ChainTuple((a, ExactMatrix.zeros(3), a))).is_zero()


def test_subproduct_order_and_cache():
    a = ExactMatrix([[1, 2], [0, 1]])
    b = ExactMatrix([[0, 1], [1, 0]])
    c = ExactMatrix([[2, 0], [1, 1]])
    t = ChainTuple((a, b, c))
    assert t.subproduct(1, 3) == c @ b @ a
    assert t.subproduct(2, 3) == t.subproduct(3, 3) @ t.subproduct(2, 2)
    assert t.subproduct(2, 2) == b
    with pytest.raises(IndexError):
        t.subproduct(3, 2)


def test_chain_rejects_mixed_inputs():
    with pytest.raises(ValueError):
        ChainTuple((ExactMatrix.identity(2), ExactMatrix.identity(3)))
    with pytest.raises(ValueError):
        ChainTuple((ExactMatrix.identity(2), ExactMatrix.identity(2, GF(3))))
    with pytest.raises(ValueError):
        ChainTuple(())


def test_chain_json_roundtrip():
    t = ChainTuple(witness_tuple(GF(5)))
    back = ChainTuple.from_json(json.loads(json.dumps(t.to_json())))
    assert back.matrices == t.matrices and back.field == GF(5)
    bare = ChainTuple.from_json([[["1/2", 0], [0, 0]]])
    assert bare[0][0, 0] == Fraction(1, 2)


def test_upper_bound_values():
    assert [upper_bound_N(d) for d in (1, 2, 3, 4)] == [1, 2, 9, 96]
    assert upper_bound_N(5) == 5 * 10 * 10 * 5
    assert [best_known_N(d) for d in (1, 2, 3, 4)] == [1, 2, 5, 96]
    with pytest.raises(ValueError):
        upper_bound_N(0)


def test_descent_certificate_d2():
    a = ExactMatrix([[0, 1], [0, 0]])
    cert = rank_descent_certificate(ChainTuple((a, a)))
    assert cert.final_rank == 0
    assert [s.level for s in cert.stages] == [0, 1]
    assert cert.stages[-1].ranks == [0]


def test_descent_certificate_repeated_shift():
    cert = rank_descent_certificate(ChainTuple([SHIFT3] * 9))
    assert [s.bound for s in cert.stages] == [2, 1, 0]
    assert [s.block_length for s in cert.stages] == [1, 3, 9]
    assert cert.stages[0].ranks == [2] * 9
    for s in cert.stages:
        assert max(s.ranks) <= s.bound
        assert all(rank(p) == r for p, r in zip(s.products, s.ranks))
    json.dumps(cert.to_json())


def test_descent_certificate_errors():
    with pytest.raises(ValueError):
        rank_descent_certificate(ChainTuple([SHIFT3] * 4))
    with pytest.raises(NotNilChainError):
        rank_descent_certificate(ChainTuple([SHIFT3] * 8 + [ExactMatrix.identity(3)]))


def test_fixture_block_has_rank_at_most_one():
    m = witness_matrices()
    # (E, D, C, B, A) would need (E, BCD, A) in Nil^3 and hence rank(BCD) <= 1
    assert rank(m["B"] @ m["C"] @ m["D"]) <= 1
    t = ChainTuple((m["D"], m["C"], m["B"]))
    assert is_nil_chain(t) and rank(chain_product(t)) <= 1


def test_block_rank_check():
    assert block_rank_check(ChainTuple([SHIFT3] * 3), 2) == 0
    with pytest.raises(ValueError):
        block_rank_check(ChainTuple([SHIFT3] * 2), 2)


def test_sandwich_ab_branch():
    a = ExactMatrix([[0, 0, 1], [0, 0, 0], [0, 0, 0]])
    c = ExactMatrix([[0, 0, 0], [0, 0, 0], [1, 0, 0]])
    res = rank_one_sandwich_check(a, E23, c)
    assert res.branch == "AB" and res.ab_holds
    assert a @ E23 == E23.scale(res.scalar)


def test_sandwich_bc_branch():
    a = ExactMatrix([[0, 1, 0], [0, 0, 0], [0, 0, 0]])
    c = ExactMatrix([[0, 0, 0], [1, 0, 0], [0, 0, 0]])
    res = rank_one_sandwich_check(a, E23, c)
    assert res.branch == "BC" and res.bc_holds
    assert E23 @ c == E23.scale(res.scalar)


def test_sandwich_zero_sides():
    z = ExactMatrix.zeros(3)
    res = rank_one_sandwich_check(z, E23, z)
    assert res.ab_holds and res.bc_holds
    assert res.ab_scalar == 0 and res.bc_scalar == 0


def test_sandwich_preconditions():
    with pytest.raises(ValueError):
        rank_one_sandwich_check(ExactMatrix.zeros(3), SHIFT3, ExactMatrix.zeros(3))
    with pytest.raises(NotNilChainError):
        rank_one_sandwich_check(ExactMatrix.identity(3), E23, ExactMatrix.zeros(3))


def _random_rank_one_middle(rng, fld, tries):
    for _ in range(tries):
        b = random_rank_one_nilpotent(3, fld, rng, box=2)
        a = random_nilpotent(3, fld, rng, box=2) if rng.random() < 0.5 else random_rank_one_nilpotent(3, fld, rng, box=2)
        c = random_nilpotent(3, fld, rng, box=2) if rng.random() < 0.5 else random_rank_one_nilpotent(3, fld, rng, box=2)
        t = ChainTuple((c, b, a))
        if rank(b) == 1 and is_nil_chain(t):
            yield a, b, c


@pytest.mark.parametrize("fld", [QQ, GF(3), GF(5)], ids=str)
def test_rank_one_middle_forces_zero_product(fld):
    rng = np.random.default_rng(11)
    found = 0
    for a, b, c in _random_rank_one_middle(rng, fld, 1500):
        found += 1
        assert (a @ b @ c).is_zero()
        res = rank_one_sandwich_check(a, b, c)
        assert res.holds
    assert found >= 10


@pytest.mark.parametrize("d", [2, 3, 4])
def test_rank_one_factors_force_zero_product(d):
    rng = np.random.default_rng(d)
    for _ in range(30):
        t = random_rank_one_chain(d, d, QQ, rng)
        assert is_nil_chain(t) and sympy_is_nil_chain(t.matrices)
        assert all(rank(m) <= 1 for m in t.matrices[: d - 1])
        assert chain_product(t).is_zero()


def test_scaling_preserves_membership_and_scales_product():
    t = ChainTuple(witness_tuple())
    lam = Fraction(-3, 7)
    for i in range(t.n):
        mats = list(t.matrices)
        mats[i] = mats[i].scale(lam)
        s = ChainTuple(mats)
        assert is_nil_chain(s)
        assert chain_product(s) == chain_product(t).scale(lam)


def test_conjugation_preserves_membership():
    rng = np.random.default_rng(3)
    p = random_unimodular(3, QQ, rng)
    s = conjugate(witness_tuple(), p)
    assert is_nil_chain(s)
    assert rank(chain_product(s)) == 1


def test_exhaustive_nil_chains_gf2_d2_vanish():
    mats = [ExactMatrix([[a, b], [c, e]], GF(2)) for a in (0, 1) for b in (0, 1) for c in (0, 1) for e in (0, 1)]
    members = 0
    for x in mats:
        for y in mats:
            t = ChainTuple((x, y))
            if is_nil_chain(t):
                members += 1
                assert chain_product(t).is_zero()
    # nilpotent 2x2 matrices over GF(2): 0, E12, E21, [[1,1],[1,1]]
    assert sum(is_nilpotent(m) for m in mats) == 4
    assert members > 4
