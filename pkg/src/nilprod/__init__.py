"""Nil-chains of matrices, joint spectral radius bounds and cocycle experiments."""

from __future__ import annotations

__version__ = "0.1.0"

from .exact import GF, QQ, ExactMatrix, Field, char_coeffs, exterior_power, is_nilpotent, rank  # noqa: E402
from .nilchain import (  # noqa: E402
    ChainTuple,
    chain_product,
    is_nil_chain,
    rank_descent_certificate,
    rank_one_sandwich_check,
    upper_bound_N,
)

__all__ = [
    "GF",
    "QQ",
    "ChainTuple",
    "ExactMatrix",
    "Field",
    "chain_product",
    "char_coeffs",
    "exterior_power",
    "is_nil_chain",
    "is_nilpotent",
    "rank",
    "rank_descent_certificate",
    "rank_one_sandwich_check",
    "upper_bound_N",
]
