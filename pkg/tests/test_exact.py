from __future__ import annotations

import itertools
import json
from fractions import Fraction

import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from nilprod.exact import (
    GF,
    QQ,
    ExactMatrix,
    Field,
    FieldMismatchError,
    char_coeffs,
    determinant,
    exterior_power,
    inverse,
    is_nilpotent,
    kernel_basis,
    mat_pow,
    mat_vec,
    parse_field,
    rank,
)

SHIFT3 = [[0, 1, 0], [0, 0, 1], [0, 0, 0]]


def small_matrices(d, lo=-3, hi=3):
    return st.lists(st.lists(st.integers(lo, hi), min_size=d, max_size=d), min_size=d, max_size=d)


def rational_matrices(d):
    frac = st.fractions(min_value=-4, max_value=4, max_denominator=5)
    return st.lists(st.lists(frac, min_size=d, max_size=d), min_size=d, max_size=d)


def test_field_coercion():
    assert QQ("3/6") == Fraction(1, 2)
    assert QQ("4/2") == 2 and isinstance(QQ("4/2"), int)
    assert QQ(0.5) == Fraction(1, 2)
    assert GF(5)(-1) == 4
    assert GF(5)(Fraction(1, 2)) == 3
    with pytest.raises(ZeroDivisionError):
        GF(3)(Fraction(1, 3))
    with pytest.raises(ValueError):
        Field(4)
    with pytest.raises(ValueError):
        QQ(float("nan"))


def test_parse_field():
    assert parse_field("Q") == QQ
    assert parse_field("gf3") == GF(3)
    assert parse_field("GF(7)") == GF(7)
    with pytest.raises(ValueError):
        parse_field("reals")


def test_products_and_errors():
    a = ExactMatrix([[1, 2], [3, 4]])
    b = ExactMatrix([["1/2", 0], [0, 1]])
    assert (a @ b).rows == ((Fraction(1, 2), 2), (Fraction(3, 2), 4))
    assert mat_pow(ExactMatrix(SHIFT3), 3).is_zero()
    assert mat_pow(a, 0) == ExactMatrix.identity(2)
    with pytest.raises(FieldMismatchError):
        a @ ExactMatrix([[1, 0], [0, 1]], GF(3))
    with pytest.raises(ValueError):
        a @ ExactMatrix.identity(3)


def test_gf_arithmetic_wraps():
    a = ExactMatrix([[2, 2], [2, 2]], GF(3))
    assert (a @ a).rows == ((2, 2), (2, 2))
    assert (a + a).rows == ((1, 1), (1, 1))


@settings(max_examples=60, deadline=None)
@given(rational_matrices(3))
def test_determinant_matches_sympy(rows):
    expected = sympy.Matrix(rows).det()
    assert Fraction(determinant(ExactMatrix(rows))) == Fraction(int(expected.p), int(expected.q))


@settings(max_examples=60, deadline=None)
@given(small_matrices(4, 0, 6))
def test_determinant_mod_p_matches_integer_determinant(rows):
    expected = int(sympy.Matrix(rows).det()) % 7
    assert determinant(ExactMatrix(rows, GF(7))) == expected


@settings(max_examples=60, deadline=None)
@given(rational_matrices(4))
def test_char_coeffs_match_sympy_charpoly(rows):
    x = sympy.Symbol("x")
    coeffs = sympy.Matrix(rows).charpoly(x).all_coeffs()
    expected = tuple(Fraction(int(c.p), int(c.q)) * (-1) ** k for k, c in enumerate(coeffs) if k > 0)
    got = tuple(Fraction(c) for c in char_coeffs(ExactMatrix(rows)))
    assert got == expected


@settings(max_examples=60, deadline=None)
@given(small_matrices(4), small_matrices(4), st.integers(1, 4))
def test_exterior_power_is_multiplicative(a_rows, b_rows, r):
    a, b = ExactMatrix(a_rows), ExactMatrix(b_rows)
    assert exterior_power(a @ b, r) == exterior_power(a, r) @ exterior_power(b, r)


def test_exterior_power_shape_and_extremes():
    a = ExactMatrix([[1, 2, 0], [0, 1, 3], [4, 0, 1]])
    assert exterior_power(a, 1) == a
    assert exterior_power(a, 3).rows == ((determinant(a),),)
    assert exterior_power(a, 2).d == 3
    for bad in (0, 4):
        with pytest.raises(ValueError):
            exterior_power(a, bad)


def test_exterior_power_entries_are_minors():
    rows = [[2, -1, 0, 3], [1, 1, 4, 0], [0, 2, -2, 1], [5, 0, 1, 1]]
    a = ExactMatrix(rows)
    m = sympy.Matrix(rows)
    e = exterior_power(a, 2)
    subsets = list(itertools.combinations(range(4), 2))
    for i, S in enumerate(subsets):
        for j, T in enumerate(subsets):
            assert e[i, j] == m.extract(list(S), list(T)).det()


def test_traces_of_exterior_powers_give_char_coeffs():
    a = ExactMatrix([[1, 2, 0], [0, 1, 3], [4, 0, 1]])
    for ell, c in enumerate(char_coeffs(a), start=1):
        e = exterior_power(a, ell)
        assert sum(e[i, i] for i in range(e.d)) == c


def test_is_nilpotent_examples():
    assert is_nilpotent(ExactMatrix(SHIFT3))
    assert not is_nilpotent(ExactMatrix.identity(3))
    assert is_nilpotent(ExactMatrix.zeros(2))
    # nilpotent mod 2 but not over Q
    assert is_nilpotent(ExactMatrix([[1, 1], [1, 1]], GF(2)))
    assert not is_nilpotent(ExactMatrix([[1, 1], [1, 1]]))


@settings(max_examples=80, deadline=None)
@given(small_matrices(3, -2, 2))
def test_is_nilpotent_agrees_with_sympy(rows):
    m = sympy.Matrix(rows)
    assert is_nilpotent(ExactMatrix(rows)) == (m**3).is_zero_matrix


@settings(max_examples=60, deadline=None)
@given(rational_matrices(4))
def test_rank_matches_sympy(rows):
    assert rank(ExactMatrix(rows)) == sympy.Matrix(rows).rank()


def test_rank_mod_p():
    assert rank(ExactMatrix([[1, 1], [1, 1]], GF(2))) == 1
    assert rank(ExactMatrix([[2, 1], [1, 2]], GF(3))) == 1
    assert rank(ExactMatrix([[2, 1], [1, 2]])) == 2


def test_kernel_basis_spans_kernel():
    rows = [[1, 2, 3, 4], [2, 4, 6, 8], [0, 1, 1, 0]]
    basis = kernel_basis(rows)
    assert len(basis) == 4 - sympy.Matrix(rows).rank()
    m = ExactMatrix([r for r in rows] + [[0, 0, 0, 0]])
    for v in basis:
        assert all(x == 0 for x in mat_vec(m, v))
    assert len(kernel_basis([], QQ, ncols=3)) == 3


def test_inverse_roundtrip():
    a = ExactMatrix([[2, 1, 0], [1, 3, 1], [0, 1, 4]])
    assert a @ inverse(a) == ExactMatrix.identity(3)
    b = ExactMatrix([[2, 1], [1, 1]], GF(5))
    assert b @ inverse(b) == ExactMatrix.identity(2, GF(5))
    with pytest.raises(ZeroDivisionError):
        inverse(ExactMatrix([[1, 2], [2, 4]]))


def test_json_roundtrip():
    a = ExactMatrix([["1/3", 2], [0, "-5/7"]])
    assert ExactMatrix.from_json(json.loads(a.dumps())) == a
    b = ExactMatrix([[1, 2], [0, 1]], GF(3))
    assert ExactMatrix.from_json(json.loads(b.dumps())) == b
    with pytest.raises(FieldMismatchError):
        ExactMatrix.from_json(b.to_json(), GF(5))


def test_from_floats_is_exact():
    a = ExactMatrix.from_floats(np.array([[0.1, 0.0], [0.0, 1.0]]))
    assert a[0, 0] == Fraction(0.1)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_nilpotency_criteria_agree_over_gf2(d):
    fld = GF(2)
    count = 0
    for bits in itertools.product((0, 1), repeat=d * d):
        a = ExactMatrix([bits[i * d : (i + 1) * d] for i in range(d)], fld)
        by_power = mat_pow(a, d).is_zero()
        by_coeffs = all(c == 0 for c in char_coeffs(a))
        assert by_power == by_coeffs == is_nilpotent(a)
        count += by_power
    # q^(d(d-1)) nilpotent matrices over a field with q elements
    assert count == 2 ** (d * (d - 1))


@settings(max_examples=40, deadline=None)
@given(small_matrices(3, -2, 2), small_matrices(3, -2, 2))
def test_nilpotent_rank_r_has_rank_one_exterior_power(p_rows, n_rows):
    from nilprod.exact import inverse as inv

    p = ExactMatrix(p_rows)
    if determinant(p) == 0:
        p = ExactMatrix.identity(3)
    upper = ExactMatrix([[x if j > i else 0 for j, x in enumerate(r)] for i, r in enumerate(n_rows)])
    a = p @ upper @ inv(p)
    r = rank(a)
    if r > 0:
        assert rank(exterior_power(a, r)) == 1


def test_exterior_power_of_diagonal():
    a = ExactMatrix([[1, 0, 0], [0, 2, 0], [0, 0, 3]])
    assert exterior_power(a, 2) == ExactMatrix([[2, 0, 0], [0, 3, 0], [0, 0, 6]])


def test_spec_scalar_examples():
    assert char_coeffs(ExactMatrix.identity(3)) == (3, 3, 1)
    assert not is_nilpotent(ExactMatrix([[0, 0, 0], [0, 0, 0], [0, 0, 1]]))
    assert rank(ExactMatrix.zeros(3)) == 0 and rank(ExactMatrix.identity(4)) == 4
    a = ExactMatrix([[1, 2], [3, 4]])
    assert ExactMatrix.identity(2) @ a == a and (ExactMatrix.zeros(2) @ a).is_zero()
    x = Fraction(7, 3)
    assert QQ(QQ.format(x)) == x and QQ(x) + Fraction(1, 5) - Fraction(1, 5) == x
