"""Polynomial roots and spectral radii from characteristic coefficients.

Roots are found by Aberth's simultaneous iteration on batches of monic
polynomials of the same degree.  Near a root of multiplicity m the iterates
are only accurate to about ``eps**(1/m)``, so rows whose roots nearly
coincide are recomputed from the exact square-free part of the rational
characteristic polynomial; clusters that survive that step are resolved in
multiprecision.
"""

from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np
import sympy

from .exact import QQ, ExactMatrix, char_coeffs
from .search import Kernel

MAX_DIM = 8
MAX_ITER = 200
TOL = 1e-12
CLUSTER = 1e-4


def aberth(coeffs: np.ndarray, max_iter: int = MAX_ITER, tol: float = TOL) -> np.ndarray:
    """Roots of monic polynomials ``z^m + a_1 z^(m-1) + ... + a_m``.

    ``coeffs`` has shape ``(K, m)`` holding ``a_1..a_m``; returns ``(K, m)``
    complex roots.  Each polynomial is rescaled so that its roots lie in the
    unit disk (Fujiwara's bound) before iterating.
    """
    a = np.atleast_2d(np.asarray(coeffs, dtype=complex))
    K, m = a.shape
    if m == 0:
        return np.zeros((K, 0), dtype=complex)
    powers = np.arange(1, m + 1)
    scale = 2.0 * np.max(np.abs(a) ** (1.0 / powers), axis=1)
    scale[scale == 0] = 1.0
    b = a / scale[:, None] ** powers
    angles = 2 * np.pi * np.arange(m) / m + 0.4
    z = np.broadcast_to(0.7 * np.exp(1j * angles), (K, m)).copy()
    active = np.ones(K, dtype=bool)
    eye = np.eye(m, dtype=bool)
    for _ in range(max_iter):
        zi, bi = z[active], b[active]
        p = np.ones_like(zi)
        dp = np.zeros_like(zi)
        for k in range(m):
            dp = dp * zi + p
            p = p * zi + bi[:, k : k + 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(dp != 0, p / dp, 0)
            diff = zi[:, :, None] - zi[:, None, :]
            diff[:, eye] = 1
            inv = 1 / diff
            inv[:, eye] = 0
            corr = ratio / (1 - ratio * inv.sum(axis=2))
        corr = np.where(np.isfinite(corr), corr, 0)
        z[active] = zi - corr
        done = np.max(np.abs(corr), axis=1) <= tol
        idx = np.nonzero(active)[0]
        active[idx[done]] = False
        if not active.any():
            break
    return z * scale[:, None]


def near_coincident(roots: np.ndarray, radius: float = CLUSTER) -> np.ndarray:
    """Rows with two roots within ``radius`` times the largest modulus.

    Only clusters at modulus at least half the largest are flagged; the
    others cannot change the spectral radius.
    """
    r = np.atleast_2d(roots)
    m = r.shape[1]
    if m <= 1:
        return np.zeros(r.shape[0], dtype=bool)
    mod = np.abs(r)
    scale = np.max(mod, axis=1)
    dist = np.abs(r[:, :, None] - r[:, None, :])
    dist[:, np.eye(m, dtype=bool)] = np.inf
    big = mod >= 0.5 * scale[:, None]
    dist[~(big[:, :, None] | big[:, None, :])] = np.inf
    return np.min(dist, axis=(1, 2)) <= radius * scale


def batched_char_coeffs(stack: np.ndarray) -> np.ndarray:
    """Float ``(c_1..c_d)`` per matrix as sums of principal minors."""
    stack = np.asarray(stack, dtype=float)
    K, d = stack.shape[0], stack.shape[-1]
    out = np.zeros((K, d))
    for ell in range(1, d + 1):
        for S in itertools.combinations(range(d), ell):
            sub = stack[:, S][:, :, S]
            if ell == 1:
                out[:, 0] += sub[:, 0, 0]
            elif ell == 2:
                out[:, 1] += sub[:, 0, 0] * sub[:, 1, 1] - sub[:, 0, 1] * sub[:, 1, 0]
            elif ell == 3:
                out[:, 2] += (
                    sub[:, 0, 0] * (sub[:, 1, 1] * sub[:, 2, 2] - sub[:, 1, 2] * sub[:, 2, 1])
                    - sub[:, 0, 1] * (sub[:, 1, 0] * sub[:, 2, 2] - sub[:, 1, 2] * sub[:, 2, 0])
                    + sub[:, 0, 2] * (sub[:, 1, 0] * sub[:, 2, 1] - sub[:, 1, 1] * sub[:, 2, 0])
                )
            else:
                out[:, ell - 1] += np.linalg.det(sub)
    return out


def _small_degree_radius(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form largest root modulus for degrees 1 and 2."""
    if a.shape[1] == 1:
        return np.abs(a[:, 0]), np.zeros(a.shape[0], dtype=bool)
    b, c = a[:, 0], a[:, 1]
    disc = b * b - 4 * c
    real = (np.abs(b) + np.sqrt(np.maximum(disc, 0))) / 2
    rho = np.where(disc >= 0, real, np.sqrt(np.abs(c)))
    return rho, np.abs(disc) <= CLUSTER**2 * np.maximum(b * b, np.abs(c))


def _radius_from_coeffs(c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Largest root modulus of ``x^d - c_1 x^(d-1) + ...`` per row, and a mask of rows to refine."""
    K, d = c.shape
    a = c * (-1.0) ** np.arange(1, d + 1)
    rho = np.zeros(K)
    refine = np.zeros(K, dtype=bool)
    nz = a != 0
    # number of trailing zero coefficients = multiplicity of the root 0
    last = np.where(nz.any(axis=1), d - np.argmax(nz[:, ::-1], axis=1), 0)
    for m in range(1, d + 1):
        rows = np.nonzero(last == m)[0]
        if rows.size and m <= 2:
            rho[rows], refine[rows] = _small_degree_radius(a[rows, :m])
        elif rows.size:
            z = aberth(a[rows, :m])
            rho[rows] = np.max(np.abs(z), axis=1)
            refine[rows] = near_coincident(z)
    return rho, refine


EXACT_INT_LIMIT = 2**53


def _integral_rows(stack: np.ndarray) -> np.ndarray:
    flat = stack.reshape(stack.shape[0], -1)
    return np.all(flat == np.round(flat), axis=1) & (np.max(np.abs(flat), axis=1) < EXACT_INT_LIMIT)


def _exact_nilpotent_mask(stack: np.ndarray) -> np.ndarray:
    ints = np.round(stack).astype(np.int64)
    kern = Kernel(QQ, ints.shape[-1], 1, int(np.max(np.abs(ints), initial=1)))
    return kern._nil(np.mod(ints[None], kern.mods))


def spectral_radii(stack) -> np.ndarray:
    """Spectral radius of each matrix in a ``(K, d, d)`` float stack.

    Integer-valued matrices (entries below ``2**53``) get an exact nilpotency
    test, so nilpotent ones return exactly 0.  Rows with nearly repeated
    roots fall back to :func:`spectral_radius`.
    """
    stack = np.asarray(stack, dtype=float)
    if stack.ndim != 3 or stack.shape[1] != stack.shape[2]:
        raise ValueError("expected a (K, d, d) stack")
    if stack.shape[-1] > MAX_DIM:
        raise ValueError(f"dimension {stack.shape[-1]} exceeds the limit {MAX_DIM}")
    if not np.all(np.isfinite(stack)):
        raise ValueError("matrix entries must be finite")
    if stack.shape[0] == 0:
        return np.zeros(0)
    rho, refine = _radius_from_coeffs(batched_char_coeffs(stack))
    rows = np.nonzero(_integral_rows(stack))[0]
    if rows.size:
        nil = rows[_exact_nilpotent_mask(stack[rows])]
        rho[nil] = 0.0
        refine[nil] = False
    for k in np.nonzero(refine)[0]:
        rho[k] = spectral_radius(stack[k])
    return rho


def squarefree_monic(coeffs) -> list[Fraction]:
    """Exact square-free part of ``x^d - c_1 x^(d-1) + ...`` with zero roots removed.

    Returns the monic coefficients ``a_1..a_m`` of the remaining factor.
    """
    x = sympy.Symbol("x")
    full = [Fraction(1)] + [Fraction(c) * (-1) ** (k + 1) for k, c in enumerate(coeffs)]
    while len(full) > 1 and full[-1] == 0:
        full.pop()
    poly = sympy.Poly([sympy.Rational(f.numerator, f.denominator) for f in full], x, domain=sympy.QQ)
    sqf = poly.sqf_part().monic()
    return [Fraction(int(c.p), int(c.q)) for c in sqf.all_coeffs()[1:]]


def spectral_radius(a) -> float:
    """Spectral radius from exact characteristic coefficients of the rational lift.

    Accepts a float array or an :class:`ExactMatrix` over Q.  Repeated roots
    are removed exactly before root iteration.
    """
    if isinstance(a, ExactMatrix):
        if not a.field.is_rational:
            raise ValueError("spectral radius needs a matrix over Q")
        m = a
    else:
        arr = np.asarray(a, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError("expected a square matrix")
        if not np.all(np.isfinite(arr)):
            raise ValueError("matrix entries must be finite")
        m = ExactMatrix.from_floats(arr)
    if m.d > MAX_DIM:
        raise ValueError(f"dimension {m.d} exceeds the limit {MAX_DIM}")
    a_monic = squarefree_monic(char_coeffs(m))
    if not a_monic:
        return 0.0
    z = aberth(np.array([[float(c) for c in a_monic]]))
    if near_coincident(z)[0]:
        # distinct but clustered roots: double precision cannot separate them
        x = sympy.Symbol("x")
        poly = sympy.Poly([1] + [sympy.Rational(c.numerator, c.denominator) for c in a_monic], x)
        return float(max(abs(r) for r in poly.nroots(n=30, maxsteps=200)))
    return float(np.max(np.abs(z)))
