from __future__ import annotations

import numpy as np
import pytest

from nilprod.exact import GF, QQ, determinant, is_nilpotent, rank
from nilprod.nilchain import is_nil_chain
from nilprod.samplers import (
    GENERATORS,
    content_normalize,
    fixture_window,
    random_invertible,
    random_nilpotent,
    random_rank_one_nilpotent,
    random_unimodular,
    strictly_upper,
)

FIELDS = [QQ, GF(3), GF(5)]


@pytest.mark.parametrize("fld", FIELDS, ids=str)
@pytest.mark.parametrize("name", sorted(GENERATORS))
def test_generators_yield_members(fld, name):
    rng = np.random.default_rng(5)
    for d in (2, 3):
        for n in (1, 3, 5):
            t = GENERATORS[name](d, n, fld, rng)
            assert t.n == n and t.d == d and t.field == fld
            assert is_nil_chain(t)


@pytest.mark.parametrize("fld", FIELDS, ids=str)
def test_fixture_windows_are_members(fld):
    rng = np.random.default_rng(1)
    for n in (1, 2, 3, 4):
        assert is_nil_chain(fixture_window(n, fld, rng))
    with pytest.raises(ValueError):
        fixture_window(5, fld, rng)


@pytest.mark.parametrize("fld", FIELDS, ids=str)
def test_single_matrix_samplers(fld):
    rng = np.random.default_rng(2)
    for _ in range(20):
        assert determinant(random_invertible(3, fld, rng)) != 0
        assert determinant(random_unimodular(3, fld, rng)) in (1, -1, fld.modulus - 1 if fld.modulus else 1)
        assert is_nilpotent(random_nilpotent(3, fld, rng))
        assert is_nilpotent(strictly_upper(3, fld, rng))
        r1 = random_rank_one_nilpotent(3, fld, rng)
        assert is_nilpotent(r1) and rank(r1) <= 1


def test_content_normalize_divides_out_gcd():
    from nilprod.exact import ExactMatrix

    m = content_normalize(ExactMatrix([[4, -6], [0, 10]]))
    assert m.rows == ((2, -3), (0, 5))
    assert content_normalize(ExactMatrix.zeros(2)).is_zero()


def test_samplers_are_deterministic():
    a = GENERATORS["rank-one"](3, 4, QQ, np.random.default_rng(9))
    b = GENERATORS["rank-one"](3, 4, QQ, np.random.default_rng(9))
    assert a.matrices == b.matrices
