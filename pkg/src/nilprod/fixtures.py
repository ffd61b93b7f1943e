"""Built-in matrix fixtures."""

from __future__ import annotations

from .exact import QQ, ExactMatrix, Field

# A 4-tuple of 3x3 matrices whose ordered subproducts are all nilpotent while
# the full product A B C D is nonzero.  Valid over any field of characteristic
# other than 2 (every entry of the product is even).
WITNESS_D3 = {
    "A": [[-2, -6, 1], [3, 9, 16], [-1, -3, -7]],
    "B": [[0, 1, 0], [0, 0, 1], [0, 0, 0]],
    "C": [[1, 1, 0], [1, 1, 4], [-1, -1, -2]],
    "D": [[-1, 3, 16], [1, -3, -16], [1, 2, 4]],
}
WITNESS_D3_PRODUCT = [[4, 8, 16], [-6, -12, -24], [2, 4, 8]]


def witness_matrices(field: Field = QQ) -> dict[str, ExactMatrix]:
    return {k: ExactMatrix(v, field) for k, v in WITNESS_D3.items()}


def witness_tuple(field: Field = QQ) -> tuple[ExactMatrix, ...]:
    """The tuple ``(A_1, A_2, A_3, A_4) = (D, C, B, A)``; its chain product is ``A B C D``."""
    m = witness_matrices(field)
    return (m["D"], m["C"], m["B"], m["A"])


FIXTURES = {
    "witness-d3": witness_tuple,
    "paper-d3": witness_tuple,
}


def load_fixture(name: str, field: Field = QQ) -> tuple[ExactMatrix, ...]:
    try:
        factory = FIXTURES[name]
    except KeyError:
        raise ValueError(f"unknown fixture {name!r}; choose from {sorted(FIXTURES)}") from None
    return factory(field)
