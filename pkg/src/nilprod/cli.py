"""Command-line entry point: ``nilprod <group> <command> [options]``.

Groups are ``nilchain`` (verify, search, certify), ``jsr`` (bounds, bochi,
probe) and ``cocycle`` (lyapunov, recurrence, flat).  ``verify``, ``search``
and ``certify`` also work without the group name.

Exit codes: 0 success, 1 usage or input error, 2 a checked claim was
falsified.  Every common flag can be set through an environment variable
``NILPROD_<FLAG>`` (for example ``NILPROD_SEED=7``); explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .cocycle import (
    BaseSystem,
    CocycleSpec,
    SymbolState,
    default_spec,
    flat_closed_form,
    flat_counterexample,
    gap_experiment,
    irrational_surrogate,
    lyapunov_series,
    recurrence_N0,
    seed_symbols,
)
from .exact import ExactMatrix, parse_field
from .fixtures import FIXTURES, load_fixture
from .jsr import CSV_COLUMNS, as_matrix_set, bochi_rhs, jsr_bounds, probe, probe_summary
from .nilchain import (
    ChainTuple,
    NotNilChainError,
    VanishingViolation,
    best_known_N,
    chain_product,
    first_non_nilpotent,
    rank_descent_certificate,
    upper_bound_N,
)
from .report import build_report, chain_strings, emit_csv, emit_report
from .search import SearchSpaceTooLarge, search_witness, verify_vanishing

log = logging.getLogger("nilprod")

EXIT_OK, EXIT_USAGE, EXIT_FALSIFIED = 0, 1, 2
ENV_PREFIX = "NILPROD_"
GROUP_ALIASES = {"verify": "nilchain", "search": "nilchain", "certify": "nilchain"}
# Flags that never change report contents.
NOT_IN_CONFIG = {"workers", "out", "report", "format", "func", "verbose", "group", "command"}


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _env(name: str, conv, default):
    raw = os.environ.get(ENV_PREFIX + name.upper())
    if raw is None:
        return default
    try:
        return conv(raw)
    except ValueError:
        raise UsageError(f"bad value {raw!r} in {ENV_PREFIX + name.upper()}") from None


def _common(p: argparse.ArgumentParser, *, budget=None, tolerance=None, fmt="json"):
    p.add_argument("--seed", type=int, default=_env("seed", int, 0), help="64-bit master seed")
    p.add_argument("--workers", type=int, default=_env("workers", int, 1), help="worker processes")
    p.add_argument("--out", default=_env("out", str, None), help="output path (stdout if omitted)")
    p.add_argument("--format", choices=("json", "csv"), default=_env("format", str, fmt))
    if budget is not None:
        p.add_argument("--budget", type=int, default=_env("budget", int, budget), help="candidate budget")
    if tolerance is not None:
        p.add_argument("--tolerance", type=float, default=_env("tolerance", float, tolerance))
    p.add_argument("-v", "--verbose", action="store_true")


def _load_json(path: str):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}:{exc.lineno}:{exc.colno}: parse error: {exc.msg}") from None


def _config(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in NOT_IN_CONFIG}


def _write(text: str, out):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _finish(args, kind, claim, result, falsified=False, series=None):
    status = "falsified" if falsified else "ok"
    report = build_report(kind, claim, _config(args), result, status)
    if args.format == "csv" and series is not None:
        text = emit_csv(*series)
        if getattr(args, "report", None):
            emit_report(report, args.report)
    else:
        text = emit_report(report)
    _write(text, args.out)
    return EXIT_FALSIFIED if falsified else EXIT_OK


# ---------------------------------------------------------------- nilchain


def _witness_json(rep):
    out = rep.to_json()
    if rep.witness is not None:
        out["witness"] = {
            "matrices": chain_strings(rep.witness),
            "product": chain_strings(ChainTuple([chain_product(rep.witness)]))[0],
        }
    return out


def cmd_verify(args) -> int:
    fld = parse_field(args.field)
    if args.fixtures:
        t = ChainTuple(load_fixture(args.fixtures, fld))
        bad = first_non_nilpotent(t)
        prod = chain_product(t)
        result = {
            "fixture": args.fixtures,
            "field": fld.name,
            "d": t.d,
            "n": t.n,
            "is_nil_chain": bad is None,
            "first_non_nilpotent": list(bad) if bad else None,
            "product": chain_strings(ChainTuple([prod]))[0],
            "product_nonzero": not prod.is_zero(),
            "vanishing_length": best_known_N(t.d),
        }
        # the fixture's product is even, so the claim only applies away from characteristic 2
        falsified = fld.modulus != 2 and (bad is not None or prod.is_zero())
        return _finish(args, "fixture", "witness-d3", result, falsified)
    if args.d is None or args.n is None:
        raise UsageError("give --fixtures or both --d and --n")
    source = {"exhaustive": "enumerator", "enumerator": "enumerator", "sampler": "sampler"}[args.mode]
    rep = verify_vanishing(args.d, args.n, fld, source=source, budget=args.budget, seed=args.seed,
                           workers=args.workers, shards=args.shards)
    claim = {2: "vanishing-d2", 3: "vanishing-d3"}.get(args.d, "vanishing")
    return _finish(args, "witness-report", claim, _witness_json(rep), rep.falsifies_vanishing)


def cmd_search(args) -> int:
    fld = parse_field(args.field)
    rep = search_witness(args.d, args.n, fld, strategy=args.strategy, budget=args.budget, seed=args.seed,
                         workers=args.workers, shards=args.shards)
    claim = {2: "vanishing-d2", 3: "vanishing-d3"}.get(args.d, "vanishing")
    return _finish(args, "witness-report", claim, _witness_json(rep), rep.falsifies_vanishing)


def cmd_certify(args) -> int:
    fld = parse_field(args.field) if args.field else None
    obj = _load_json(args.input)
    try:
        t = ChainTuple.from_json(obj, fld)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"{args.input}: malformed tuple: {exc}") from None
    if t.n < upper_bound_N(t.d):
        raise UsageError(f"tuple length {t.n} is below the certified length {upper_bound_N(t.d)} for d={t.d}")
    try:
        cert = rank_descent_certificate(t)
    except NotNilChainError as exc:
        raise UsageError(str(exc)) from None
    except VanishingViolation as exc:
        return _finish(args, "descent-certificate", "rank-descent", {"error": str(exc)}, True)
    return _finish(args, "descent-certificate", "rank-descent", cert.to_json())


# --------------------------------------------------------------------- jsr


def _matrix_set(path: str) -> np.ndarray:
    obj = _load_json(path)
    mats = obj["matrices"] if isinstance(obj, dict) else obj
    try:
        return as_matrix_set([ExactMatrix.from_json(m).to_float() for m in mats])
    except (TypeError, ValueError, KeyError) as exc:
        raise UsageError(f"{path}: malformed matrix set: {exc}") from None


def cmd_bounds(args) -> int:
    M = _matrix_set(args.matrices)
    b = jsr_bounds(M, args.depth, norm=args.norm)
    result = b.to_json()
    result["bracket_within_tolerance"] = b.gap <= args.tolerance
    return _finish(args, "jsr-bounds", "jsr-bounds", result, b.best_lower > b.best_upper + 1e-9)


def cmd_bochi(args) -> int:
    M = _matrix_set(args.matrices)
    value = bochi_rhs(M, seed=args.seed)
    return _finish(args, "bochi-rhs", "jsr-bounds", {"value": value, "max_word_length": upper_bound_N(M.shape[-1])})


def cmd_probe(args) -> int:
    rows = probe(args.d, args.n, args.samples, ensemble=args.ensemble, seed=args.seed, workers=args.workers)
    summary = probe_summary(rows, args.d)
    series = (CSV_COLUMNS, [r.as_csv() for r in rows])
    return _finish(args, "inequality-probe", "inequality-probe", summary, bool(summary["violations"]), series)


# ----------------------------------------------------------------- cocycle


def _cocycle_spec(path) -> CocycleSpec:
    if path is None:
        return default_spec()
    try:
        return CocycleSpec.from_json(_load_json(path))
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"{path}: malformed cocycle spec: {exc}") from None


def cmd_lyapunov(args) -> int:
    spec = _cocycle_spec(args.spec)
    checkpoints = args.checkpoints or [max(args.stride, args.n // 10 // args.stride * args.stride), args.n]
    rep = gap_experiment(spec, args.seeds, checkpoints, seed=args.seed, stride=args.stride, workers=args.workers)
    result = rep.to_json()
    result["tolerance"] = args.tolerance
    result["within_tolerance"] = result["quantiles"][str(rep.checkpoints[0])]["q95"] < args.tolerance
    series = None
    if args.format == "csv":
        symbols = seed_symbols(spec.base, args.seed, args.seeds, args.n)
        rows = []
        for k in range(args.seeds):
            s = lyapunov_series(spec, SymbolState(symbols[k]), args.n, args.stride)
            rows.extend((k, n, a, b) for n, a, b in s.rows())
        series = (("seed", "n", "lognorm", "logradius"), rows)
    bad = bool(np.max(rep.excess) > 1e-9)
    return _finish(args, "lyapunov-gap", "berger-wang-cocycle", result, bad, series)


def cmd_recurrence(args) -> int:
    prefix = [int(c) for c in args.prefix]
    if not prefix or any(b not in (0, 1) for b in prefix):
        raise UsageError("--prefix must be a nonempty bit string")
    gamma = Fraction(args.gamma)
    bits = seed_symbols(BaseSystem("doubling"), args.seed, args.seeds, args.n_probe + len(prefix) + 1)
    bits[:, : len(prefix)] = prefix  # condition the product measure on U
    n0 = [recurrence_N0(b, prefix, gamma, args.n_probe) for b in bits]
    result = {
        "prefix": args.prefix,
        "gamma": str(gamma),
        "n_probe": args.n_probe,
        "N0": n0,
        "found": sum(v is not None for v in n0),
        "seeds": args.seeds,
    }
    return _finish(args, "recurrence", "recurrence", result)


def cmd_flat(args) -> int:
    if args.a == 0:
        raise UsageError("--a must be nonzero")
    if args.n < 1 or args.stride < 1:
        raise UsageError("--n and --stride must be positive")
    args.stride = min(args.stride, args.n)
    theta = irrational_surrogate(args.n) if args.theta == "surrogate" else Fraction(args.theta)
    x = tuple(float(v) for v in args.x.split(","))
    if len(x) != 2:
        raise UsageError("--x takes two comma-separated coordinates")
    f = flat_counterexample(args.a, theta, x, args.n, args.stride)
    closed = flat_closed_form(args.a, theta, f.n[-1])
    consistent = closed.theta == f.rotation[-1]
    result = {
        "a": args.a,
        "theta": str(theta),
        "x": list(x),
        "final_n": f.n[-1],
        "final_drift": f.drift[-1],
        "drift_error": abs(f.drift[-1] - abs(args.a)),
        "max_stable_length": max(f.stable),
        "translation_steps": [n for n, s in zip(f.n, f.stable) if s > 0],
        "closed_form_rotation_agrees": consistent,
    }
    series = (("n", "drift", "stable_length"), f.rows())
    return _finish(args, "flat-counterexample", "flat-isometry", result, not consistent, series)


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    p = Parser(prog="nilprod", description="Nil-chains, joint spectral radius bounds and cocycle experiments.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    groups = p.add_subparsers(dest="group", required=True, parser_class=Parser)

    nil = groups.add_parser("nilchain", help="nil-chain membership, vanishing and witnesses")
    nsub = nil.add_subparsers(dest="command", required=True, parser_class=Parser)

    v = nsub.add_parser("verify", help="check a fixture or enumerate/sample nil-chains")
    v.add_argument("--fixtures", choices=sorted(FIXTURES))
    v.add_argument("--d", type=int)
    v.add_argument("--n", type=int)
    v.add_argument("--field", default="Q", help="Q or gfP for a prime P <= 13")
    v.add_argument("--mode", choices=("exhaustive", "enumerator", "sampler"), default="exhaustive")
    v.add_argument("--shards", type=int, default=8)
    _common(v, budget=10**6)
    v.set_defaults(func=cmd_verify)

    s = nsub.add_parser("search", help="look for a nil-chain with nonzero product")
    s.add_argument("--d", type=int, required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--field", default="Q")
    s.add_argument("--strategy", choices=("exhaustive", "random-restart"), default="random-restart")
    s.add_argument("--shards", type=int, default=8)
    _common(s, budget=10**5)
    s.set_defaults(func=cmd_search)

    c = nsub.add_parser("certify", help="rank-descent certificate for a long nil-chain")
    c.add_argument("--input", required=True, help="tuple JSON: {'modulus': p|null, 'matrices': [...]}")
    c.add_argument("--field", help="override the field stored in the file")
    _common(c)
    c.set_defaults(func=cmd_certify)

    jsr = groups.add_parser("jsr", help="joint spectral radius bounds and the inequality probe")
    jsub = jsr.add_subparsers(dest="command", required=True, parser_class=Parser)

    b = jsub.add_parser("bounds", help="product-tree bounds")
    b.add_argument("--matrices", required=True, help="JSON list of matrices")
    b.add_argument("--depth", type=int, default=12)
    b.add_argument("--norm", choices=("spectral", "inf", "one", "scaled-max"), default="spectral")
    _common(b, tolerance=1e-6)
    b.set_defaults(func=cmd_bounds)

    bo = jsub.add_parser("bochi", help="max over short words of the normalized spectral radius")
    bo.add_argument("--matrices", required=True)
    _common(bo)
    bo.set_defaults(func=cmd_bochi)

    pr = jsub.add_parser("probe", help="sample (L, R) pairs and fit the envelope")
    pr.add_argument("--d", type=int, required=True)
    pr.add_argument("--n", type=int, required=True)
    pr.add_argument("--samples", type=int, default=10**4)
    pr.add_argument("--ensemble", choices=("mixed", "uniform", "near-nilpotent", "nil-chain"), default="mixed")
    pr.add_argument("--report", help="JSON summary path when --format csv")
    _common(pr, fmt="csv")
    pr.set_defaults(func=cmd_probe)

    coc = groups.add_parser("cocycle", help="cocycle experiments")
    csub = coc.add_subparsers(dest="command", required=True, parser_class=Parser)

    ly = csub.add_parser("lyapunov", help="norm and spectral-radius growth along random orbits")
    ly.add_argument("--spec", help="cocycle JSON (default: two positive 2x2 matrices, fair coin)")
    ly.add_argument("--seeds", type=int, default=100)
    ly.add_argument("--n", type=int, default=10**4)
    ly.add_argument("--stride", type=int, default=1)
    ly.add_argument("--checkpoints", type=int, nargs="+")
    ly.add_argument("--report", help="JSON summary path when --format csv")
    _common(ly, tolerance=1e-2)
    ly.set_defaults(func=cmd_lyapunov)

    rc = csub.add_parser("recurrence", help="return-time threshold N0 under the doubling map")
    rc.add_argument("--prefix", default="0", help="bit string defining the cylinder U")
    rc.add_argument("--gamma", default="1/6")
    rc.add_argument("--seeds", type=int, default=100)
    rc.add_argument("--n-probe", type=int, default=10**4, dest="n_probe")
    _common(rc)
    rc.set_defaults(func=cmd_recurrence)

    fl = csub.add_parser("flat", help="translation drift and stable length of the flat cocycle")
    fl.add_argument("--a", type=float, default=1.0)
    fl.add_argument("--theta", default="surrogate", help="p/q, or 'surrogate' for a non-periodic point")
    fl.add_argument("--x", default="1,0.5")
    fl.add_argument("--n", type=int, default=10**5)
    fl.add_argument("--stride", type=int, default=1000)
    fl.add_argument("--report", help="JSON summary path when --format csv")
    _common(fl)
    fl.set_defaults(func=cmd_flat)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] in GROUP_ALIASES:
        argv.insert(0, GROUP_ALIASES[argv[0]])
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"nilprod: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, SearchSpaceTooLarge, ValueError) as exc:
        print(f"nilprod: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"nilprod: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
