"""Versioned JSON reports and CSV series.

Reports are serialized with sorted keys and ``repr``-exact floats, and carry
no timings or worker counts, so a fixed seed and configuration always yields
the same bytes.
"""

from __future__ import annotations

import csv
import io
import json
import math
from fractions import Fraction
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1
TOOL = "nilprod"

# Named claims a report can exercise.
CLAIMS = {
    "witness-d3": "length-4 nil-chain of 3x3 matrices with nonzero product",
    "vanishing": "nil-chains of length >= N(d) have zero product",
    "vanishing-d2": "N(2) = 2",
    "vanishing-d3": "N(3) <= 5",
    "rank-descent": "staged block-rank descent to a zero product",
    "jsr-bounds": "norm and spectral-radius bounds bracket the joint spectral radius",
    "inequality-probe": "chain product norm is controlled by subproduct spectral radii",
    "berger-wang-cocycle": "limsup of log spectral radius equals the Lyapunov exponent",
    "recurrence": "return times to a positive-measure set track every frequency",
    "flat-isometry": "translation drift without stable length for a flat isometric cocycle",
}


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "-inf" if x < 0 else "inf"
        return x
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def build_report(kind: str, claim: str, config: dict, result: dict, status: str = "ok") -> dict:
    if claim not in CLAIMS:
        raise KeyError(f"unknown claim tag {claim!r}")
    return {
        "schema_version": SCHEMA_VERSION,
        "tool": TOOL,
        "kind": kind,
        "claim": {"tag": claim, "statement": CLAIMS[claim]},
        "status": status,
        "config": config,
        "result": result,
    }


def dumps(report: dict) -> str:
    return json.dumps(_clean(report), indent=2, sort_keys=True, allow_nan=False) + "\n"


def emit_report(report: dict, out: str | Path | None = None) -> str:
    """Serialize ``report``; write it to ``out`` when given.  Returns the text."""
    text = dumps(report)
    if out is not None:
        try:
            Path(out).write_text(text)
        except OSError as exc:
            raise OSError(f"cannot write report to {out}: {exc.strerror}") from exc
    return text


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(x) if isinstance(x, float) else x for x in r])
    return buf.getvalue()


def emit_csv(header, rows, out: str | Path | None = None) -> str:
    text = csv_text(header, rows)
    if out is not None:
        try:
            Path(out).write_text(text)
        except OSError as exc:
            raise OSError(f"cannot write series to {out}: {exc.strerror}") from exc
    return text


def chain_strings(chain) -> list:
    """Matrices of a chain with every entry as a ``"p/q"`` (or integer) string."""
    return [[[str(Fraction(x)) for x in row] for row in m.rows] for m in chain.matrices]
