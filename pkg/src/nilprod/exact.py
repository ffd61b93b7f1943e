"""Exact dense matrices over the rationals and small prime fields.

Scalars are plain Python numbers: over Q an entry is an ``int`` when it is
integral and a ``Fraction`` otherwise (always in lowest terms), over GF(p) it
is an ``int`` in ``[0, p)``.  Keeping integral rationals as ``int`` makes
integer matrices roughly an order of magnitude faster to multiply.

Exterior powers index their rows and columns by sorted r-subsets of
``range(d)`` in lexicographic order (``itertools.combinations`` order).
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence, Union

import numpy as np

Scalar = Union[int, Fraction]

MAX_PRIME = 13
_SMALL_PRIMES = (2, 3, 5, 7, 11, 13)


class FieldMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class Field:
    """Scalar field descriptor: the rationals (``modulus=None``) or GF(p)."""

    modulus: int | None = None

    def __post_init__(self):
        p = self.modulus
        if p is not None and p not in _SMALL_PRIMES:
            raise ValueError(f"prime field modulus must be a prime <= {MAX_PRIME}, got {p}")

    @property
    def is_rational(self) -> bool:
        return self.modulus is None

    @property
    def name(self) -> str:
        return "Q" if self.modulus is None else f"GF({self.modulus})"

    @property
    def tag(self) -> str:
        return "q" if self.modulus is None else f"gf{self.modulus}"

    def __repr__(self) -> str:
        return self.name

    def __call__(self, value) -> Scalar:
        """Coerce ``value`` (int, Fraction, float, or ``"p/q"`` string) into the field."""
        p = self.modulus
        if isinstance(value, str):
            value = Fraction(value.strip())
        elif isinstance(value, bool):
            value = int(value)
        elif isinstance(value, (float, np.floating)):
            if not math.isfinite(value):
                raise ValueError(f"non-finite scalar {value!r}")
            value = Fraction(float(value))
        elif isinstance(value, np.integer):
            value = int(value)
        if p is None:
            if isinstance(value, Fraction):
                return value.numerator if value.denominator == 1 else value
            if isinstance(value, int):
                return value
            raise TypeError(f"cannot coerce {value!r} to Q")
        if isinstance(value, Fraction):
            if value.denominator % p == 0:
                raise ZeroDivisionError(f"{value} has no image in GF({p})")
            return value.numerator * pow(value.denominator, -1, p) % p
        if isinstance(value, int):
            return value % p
        raise TypeError(f"cannot coerce {value!r} to GF({p})")

    def inv(self, x: Scalar) -> Scalar:
        if x == 0:
            raise ZeroDivisionError("inverse of zero")
        if self.modulus is None:
            return _norm_q(Fraction(1) / x)
        return pow(x, -1, self.modulus)

    def format(self, x: Scalar):
        """JSON-ready form: ints stay ints, non-integral rationals become ``"p/q"``."""
        if isinstance(x, Fraction):
            return f"{x.numerator}/{x.denominator}"
        return int(x)


QQ = Field()


def GF(p: int) -> Field:
    return Field(p)


def parse_field(text: str | None) -> Field:
    """Parse ``"q"``, ``"Q"``, ``"rational"``, ``"gf3"``, ``"GF(3)"`` or ``"3"``."""
    if text is None:
        return QQ
    t = text.strip().lower().replace("(", "").replace(")", "")
    if t in ("q", "qq", "rational", "rationals"):
        return QQ
    if t.startswith("gf"):
        t = t[2:]
    try:
        return Field(int(t))
    except ValueError as exc:
        raise ValueError(f"unknown field {text!r}") from exc


def _norm_q(x):
    if isinstance(x, Fraction) and x.denominator == 1:
        return x.numerator
    return x


class ExactMatrix:
    """Immutable square matrix with exact entries in a :class:`Field`."""

    __slots__ = ("field", "rows", "_hash")

    def __init__(self, rows: Iterable[Iterable], field: Field = QQ, *, _trusted: bool = False):
        if _trusted:
            self.rows = rows
        else:
            rows = tuple(tuple(field(x) for x in row) for row in rows)
            d = len(rows)
            if d == 0 or any(len(r) != d for r in rows):
                raise ValueError("matrix must be square and non-empty")
            self.rows = rows
        self.field = field
        self._hash = None

    @property
    def d(self) -> int:
        return len(self.rows)

    @classmethod
    def identity(cls, d: int, field: Field = QQ) -> "ExactMatrix":
        return cls(tuple(tuple(int(i == j) for j in range(d)) for i in range(d)), field, _trusted=True)

    @classmethod
    def zeros(cls, d: int, field: Field = QQ) -> "ExactMatrix":
        return cls(tuple((0,) * d for _ in range(d)), field, _trusted=True)

    @classmethod
    def from_floats(cls, a) -> "ExactMatrix":
        """Exact rational lift of a float matrix (every double is a dyadic rational)."""
        return cls(np.asarray(a, dtype=float).tolist(), QQ)

    def __getitem__(self, ij):
        i, j = ij
        return self.rows[i][j]

    def __iter__(self):
        return iter(self.rows)

    def __eq__(self, other):
        if not isinstance(other, ExactMatrix):
            return NotImplemented
        return self.field == other.field and self.rows == other.rows

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.field, self.rows))
        return self._hash

    def __repr__(self):
        body = ", ".join("[" + ", ".join(str(x) for x in r) + "]" for r in self.rows)
        suffix = "" if self.field.is_rational else f", {self.field.name}"
        return f"ExactMatrix([{body}]{suffix})"

    def __matmul__(self, other: "ExactMatrix") -> "ExactMatrix":
        return mat_mul(self, other)

    def __add__(self, other: "ExactMatrix") -> "ExactMatrix":
        _check_compatible(self, other)
        p = self.field.modulus
        if p is None:
            rows = tuple(tuple(_norm_q(a + b) for a, b in zip(r, s)) for r, s in zip(self.rows, other.rows))
        else:
            rows = tuple(tuple((a + b) % p for a, b in zip(r, s)) for r, s in zip(self.rows, other.rows))
        return ExactMatrix(rows, self.field, _trusted=True)

    def __neg__(self) -> "ExactMatrix":
        return self.scale(-1)

    def __sub__(self, other: "ExactMatrix") -> "ExactMatrix":
        return self + (-other)

    def scale(self, c) -> "ExactMatrix":
        c = self.field(c)
        p = self.field.modulus
        if p is None:
            rows = tuple(tuple(_norm_q(c * x) for x in r) for r in self.rows)
        else:
            rows = tuple(tuple(c * x % p for x in r) for r in self.rows)
        return ExactMatrix(rows, self.field, _trusted=True)

    def transpose(self) -> "ExactMatrix":
        return ExactMatrix(tuple(zip(*self.rows)), self.field, _trusted=True)

    def is_zero(self) -> bool:
        return all(x == 0 for r in self.rows for x in r)

    def submatrix(self, rows: Sequence[int], cols: Sequence[int]) -> list[list]:
        return [[self.rows[i][j] for j in cols] for i in rows]

    def to_float(self) -> np.ndarray:
        if not self.field.is_rational:
            raise FieldMismatchError("only rational matrices have a float image")
        return np.array([[float(x) for x in r] for r in self.rows])

    def to_json(self):
        rows = [[self.field.format(x) for x in r] for r in self.rows]
        if self.field.is_rational:
            return rows
        return {"modulus": self.field.modulus, "rows": rows}

    @classmethod
    def from_json(cls, obj, field: Field | None = None) -> "ExactMatrix":
        """Inverse of :meth:`to_json`; a bare array of rows is read over ``field`` (Q by default)."""
        if isinstance(obj, dict):
            fld = Field(obj["modulus"]) if obj.get("modulus") is not None else QQ
            if field is not None and field != fld:
                raise FieldMismatchError(f"matrix declares {fld}, expected {field}")
            return cls(obj["rows"], fld)
        return cls(obj, field or QQ)

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def _check_compatible(a: ExactMatrix, b: ExactMatrix) -> None:
    if a.field != b.field:
        raise FieldMismatchError(f"field mismatch: {a.field} vs {b.field}")
    if a.d != b.d:
        raise ValueError(f"dimension mismatch: {a.d} vs {b.d}")


def mat_mul(a: ExactMatrix, b: ExactMatrix) -> ExactMatrix:
    _check_compatible(a, b)
    cols = tuple(zip(*b.rows))
    p = a.field.modulus
    if p is None:
        rows = tuple(
            tuple(_norm_q(sum(x * y for x, y in zip(r, c))) for c in cols) for r in a.rows
        )
    else:
        rows = tuple(tuple(sum(x * y for x, y in zip(r, c)) % p for c in cols) for r in a.rows)
    return ExactMatrix(rows, a.field, _trusted=True)


def mat_pow(a: ExactMatrix, k: int) -> ExactMatrix:
    result = ExactMatrix.identity(a.d, a.field)
    base = a
    while k:
        if k & 1:
            result = result @ base
        k >>= 1
        if k:
            base = base @ base
    return result


def _integral_rows(m: list[list]) -> list[list[int]]:
    """Scale each row by the lcm of its denominators (rank and zero pattern are unchanged)."""
    out = []
    for row in m:
        den = 1
        for x in row:
            if isinstance(x, Fraction):
                den = den * x.denominator // math.gcd(den, x.denominator)
        out.append([int(x * den) for x in row] if den != 1 else list(row))
    return out


def _det_list(m: list[list], field: Field) -> Scalar:
    n = len(m)
    if n == 0:
        return 1
    if n == 1:
        return m[0][0]
    if n == 2:
        v = m[0][0] * m[1][1] - m[0][1] * m[1][0]
        return _norm_q(v) if field.modulus is None else v % field.modulus
    p = field.modulus
    if p is not None:
        m = [list(r) for r in m]
        det = 1
        for col in range(n):
            piv = next((i for i in range(col, n) if m[i][col]), None)
            if piv is None:
                return 0
            if piv != col:
                m[col], m[piv] = m[piv], m[col]
                det = -det
            inv = pow(m[col][col], -1, p)
            det = det * m[col][col] % p
            for i in range(col + 1, n):
                f = m[i][col] * inv % p
                if f:
                    m[i] = [(x - f * y) % p for x, y in zip(m[i], m[col])]
        return det % p
    # Bareiss fraction-free elimination on an integral rescaling
    den = 1
    if any(isinstance(x, Fraction) for r in m for x in r):
        scaled = []
        for r in m:
            rd = 1
            for x in r:
                if isinstance(x, Fraction):
                    rd = rd * x.denominator // math.gcd(rd, x.denominator)
            den *= rd
            scaled.append([int(x * rd) for x in r])
        m = scaled
    else:
        m = [list(r) for r in m]
    sign, prev = 1, 1
    for k in range(n - 1):
        if m[k][k] == 0:
            swap = next((i for i in range(k + 1, n) if m[i][k]), None)
            if swap is None:
                return 0
            m[k], m[swap] = m[swap], m[k]
            sign = -sign
        mkk = m[k][k]
        for i in range(k + 1, n):
            mik = m[i][k]
            row_i, row_k = m[i], m[k]
            for j in range(k + 1, n):
                row_i[j] = (row_i[j] * mkk - mik * row_k[j]) // prev
        prev = mkk
    return _norm_q(Fraction(sign * m[n - 1][n - 1], den))


def determinant(a: ExactMatrix) -> Scalar:
    return _det_list([list(r) for r in a.rows], a.field)


def exterior_power(a: ExactMatrix, r: int) -> ExactMatrix:
    """Matrix of r x r minors of ``a`` on lexicographically sorted r-subsets."""
    d = a.d
    if not 1 <= r <= d:
        raise ValueError(f"exterior power degree must lie in [1, {d}], got {r}")
    if r == 1:
        return a
    subsets = list(itertools.combinations(range(d), r))
    rows = tuple(
        tuple(_det_list(a.submatrix(I, J), a.field) for J in subsets) for I in subsets
    )
    return ExactMatrix(rows, a.field, _trusted=True)


def char_coeffs(a: ExactMatrix) -> tuple[Scalar, ...]:
    """``(c_1, ..., c_d)`` with ``c_l = Tr(exterior_power(a, l))``.

    The trace is the sum of the l x l principal minors; the characteristic
    polynomial is ``x^d - c_1 x^(d-1) + c_2 x^(d-2) - ... + (-1)^d c_d``.
    """
    d = a.d
    p = a.field.modulus
    out = []
    for ell in range(1, d + 1):
        total = 0
        for S in itertools.combinations(range(d), ell):
            total += _det_list(a.submatrix(S, S), a.field)
        out.append(_norm_q(total) if p is None else total % p)
    return tuple(out)


def is_nilpotent(a: ExactMatrix, cross_check: bool = True) -> bool:
    """True iff ``a**d == 0``.

    Decided by squaring ``ceil(log2 d)`` times; with ``cross_check`` the
    vanishing of all characteristic coefficients must agree.
    """
    x = a
    for _ in range(max(0, (a.d - 1).bit_length())):
        if x.is_zero():
            break
        x = x @ x
    result = x.is_zero()
    if cross_check:
        by_coeffs = all(c == 0 for c in char_coeffs(a))
        if by_coeffs != result:
            raise ArithmeticError(f"nilpotency criteria disagree for {a!r}")
    return result


def _row_reduce(m: list[list], field: Field) -> tuple[list[list], list[int]]:
    """Reduced row echelon form; pivots are the first nonzero entry in column order."""
    p = field.modulus
    m = [list(r) for r in m]
    nrows = len(m)
    ncols = len(m[0]) if m else 0
    pivots: list[int] = []
    row = 0
    for col in range(ncols):
        piv = next((i for i in range(row, nrows) if m[i][col] != 0), None)
        if piv is None:
            continue
        m[row], m[piv] = m[piv], m[row]
        if p is None:
            inv = Fraction(1) / m[row][col]
            m[row] = [_norm_q(x * inv) for x in m[row]]
        else:
            inv = pow(m[row][col], -1, p)
            m[row] = [x * inv % p for x in m[row]]
        for i in range(nrows):
            f = m[i][col]
            if i != row and f != 0:
                if p is None:
                    m[i] = [_norm_q(x - f * y) for x, y in zip(m[i], m[row])]
                else:
                    m[i] = [(x - f * y) % p for x, y in zip(m[i], m[row])]
        pivots.append(col)
        row += 1
        if row == nrows:
            break
    return m, pivots


def rank(a: ExactMatrix) -> int:
    """Row rank by Gaussian elimination (fraction-free over Q)."""
    p = a.field.modulus
    m = [list(r) for r in a.rows] if p is not None else _integral_rows([list(r) for r in a.rows])
    n = len(m)
    r = 0
    for col in range(n):
        piv = next((i for i in range(r, n) if m[i][col] != 0), None)
        if piv is None:
            continue
        m[r], m[piv] = m[piv], m[r]
        pr = m[r]
        for i in range(r + 1, n):
            f = m[i][col]
            if f:
                if p is None:
                    g = math.gcd(pr[col], f)
                    a_, b_ = pr[col] // g, f // g
                    m[i] = [a_ * x - b_ * y for x, y in zip(m[i], pr)]
                else:
                    c = f * pow(pr[col], -1, p) % p
                    m[i] = [(x - c * y) % p for x, y in zip(m[i], pr)]
        r += 1
    return r


def kernel_basis(rows: Sequence[Sequence], field: Field = QQ, ncols: int | None = None) -> list[tuple]:
    """Basis of ``{x : M x = 0}`` for the (possibly non-square) matrix with the given rows."""
    if not rows:
        if ncols is None:
            raise ValueError("ncols is required for an empty system")
        return [tuple(int(i == j) for j in range(ncols)) for i in range(ncols)]
    rows = [[field(x) for x in r] for r in rows]
    n = len(rows[0])
    reduced, pivots = _row_reduce(rows, field)
    free = [j for j in range(n) if j not in pivots]
    p = field.modulus
    basis = []
    for f in free:
        v = [0] * n
        v[f] = 1
        for i, pc in enumerate(pivots):
            x = -reduced[i][f]
            v[pc] = x % p if p is not None else x
        basis.append(tuple(v))
    return basis


def inverse(a: ExactMatrix) -> ExactMatrix:
    d = a.d
    aug = [list(r) + [int(i == j) for j in range(d)] for i, r in enumerate(a.rows)]
    reduced, pivots = _row_reduce(aug, a.field)
    if pivots[:d] != list(range(d)):
        raise ZeroDivisionError("matrix is singular")
    return ExactMatrix(tuple(tuple(r[d:]) for r in reduced), a.field, _trusted=True)


def mat_vec(a: ExactMatrix, v: Sequence) -> tuple:
    p = a.field.modulus
    if p is None:
        return tuple(_norm_q(sum(x * y for x, y in zip(r, v))) for r in a.rows)
    return tuple(sum(x * y for x, y in zip(r, v)) % p for r in a.rows)


def outer(u: Sequence, v: Sequence, field: Field = QQ) -> ExactMatrix:
    return ExactMatrix([[x * y for y in v] for x in u], field)
