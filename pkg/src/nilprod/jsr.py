"""Joint spectral radius bounds and the norm/spectral-radius inequality probe.

``max_norm`` is the maximum-absolute-entry norm.  It is not
submultiplicative (``||AB||_0 <= d ||A||_0 ||B||_0``), so upper bounds on the
joint spectral radius use an induced norm (spectral by default) while the
max-entry values are recorded alongside for reference.
"""

from __future__ import annotations

import csv
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .exact import QQ
from .nilchain import best_known_N, upper_bound_N
from .roots import spectral_radii, spectral_radius  # noqa: F401  (re-exported)

PRUNE_SLACK = 1e-12
MAX_LEVEL_NODES = 1 << 20
MAX_WORDS = 1 << 16
DELTA_FLOOR = 1e-3
EPSILONS = (1e-1, 1e-3, 1e-6)
ENSEMBLES = ("uniform", "near-nilpotent", "nil-chain")
PROBE_SHARDS = 8
CSV_COLUMNS = ("sample_id", "L_raw", "L_norm", "R", "length", "ensemble")


def as_float_matrix(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("matrix entries must be finite")
    return arr


def as_matrix_set(mats) -> np.ndarray:
    stack = [as_float_matrix(m) for m in mats]
    if not stack:
        raise ValueError("the matrix set is empty")
    if len({m.shape for m in stack}) != 1:
        raise ValueError("matrices must share one dimension")
    return np.stack(stack)


def max_norm(a) -> float:
    return float(np.max(np.abs(np.asarray(a, dtype=float)), initial=0.0))


def induced_norms(stack: np.ndarray, norm: str = "spectral") -> np.ndarray:
    """Submultiplicative norm of each matrix in a ``(K, d, d)`` stack."""
    stack = np.asarray(stack)
    if norm == "spectral":
        return np.linalg.norm(stack, 2, axis=(1, 2))
    if norm == "inf":
        return np.abs(stack).sum(axis=2).max(axis=1)
    if norm == "one":
        return np.abs(stack).sum(axis=1).max(axis=1)
    if norm == "scaled-max":
        return stack.shape[-1] * np.abs(stack).reshape(stack.shape[0], -1).max(axis=1)
    raise ValueError(f"unknown norm {norm!r}")


@dataclass
class DepthRecord:
    depth: int
    upper: float
    lower: float
    max_entry: float
    nodes: int
    survivors: int

    def to_json(self):
        return {
            "depth": self.depth,
            "upper": self.upper,
            "lower": self.lower,
            "max_entry_root": self.max_entry,
            "nodes": self.nodes,
            "survivors": self.survivors,
        }


@dataclass
class JsrBounds:
    norm: str
    records: list[DepthRecord] = field(default_factory=list)
    best_lower: float = 0.0
    best_upper: float = math.inf
    truncated: bool = False

    @property
    def gap(self) -> float:
        return self.best_upper - self.best_lower

    def to_json(self):
        return {
            "norm": self.norm,
            "best_lower": self.best_lower,
            "best_upper": self.best_upper,
            "truncated": self.truncated,
            "depths": [r.to_json() for r in self.records],
        }


MAX_BASIS_COND = 1e8


def eigen_basis(a: np.ndarray) -> np.ndarray | None:
    """Eigenvector matrix of ``a`` when it is well conditioned, else None."""
    _, v = np.linalg.eig(a)
    if not np.all(np.isfinite(v)) or np.linalg.cond(v) > MAX_BASIS_COND:
        return None
    return v


def jsr_bounds(mats, max_depth: int, norm: str = "spectral", max_nodes: int = MAX_LEVEL_NODES,
               basis: str = "auto") -> JsrBounds:
    """Breadth-first product-tree bounds on the joint spectral radius.

    Norms are taken in the coordinates of a fixed basis ``V`` (``||V^-1 W V||``
    is again submultiplicative).  ``basis="eigen"`` uses the eigenvectors of
    the member with the largest spectral radius, which makes the bound exact
    at depth one for a diagonalizable singleton; ``"auto"`` does this for
    singletons only and otherwise keeps the standard basis.

    A node ``w`` of length ``k`` is not extended when ``||w||^(1/k) <= tau``
    with ``tau = best_lower * (1 + 1e-12)``.  Cutting an infinite product at
    the first pruned prefix or after ``n`` factors shows that
    ``max(tau, max over surviving length-n nodes of ||w||^(1/n))`` bounds the
    joint spectral radius from above.
    """
    M = as_matrix_set(mats)
    if max_depth < 1:
        raise ValueError("max_depth must be at least 1")
    if basis not in ("auto", "eigen", "identity"):
        raise ValueError(f"unknown basis {basis!r}")
    V = None
    if basis == "eigen" or (basis == "auto" and M.shape[0] == 1):
        V = eigen_basis(M[int(np.argmax(spectral_radii(M)))])
    Vinv = None if V is None else np.linalg.inv(V)
    out = JsrBounds(norm=norm if V is None else f"{norm}/eigenbasis")
    tau_used = 0.0
    level = M
    for depth in range(1, max_depth + 1):
        if level.shape[0] == 0:
            out.records.append(DepthRecord(depth, tau_used, 0.0, 0.0, 0, 0))
            out.best_upper = min(out.best_upper, tau_used)
            continue
        rho = spectral_radii(level)
        norms = induced_norms(level if V is None else Vinv @ level @ V, norm)
        entry = np.abs(level).reshape(level.shape[0], -1).max(axis=1)
        lower = float(np.max(rho)) ** (1.0 / depth)
        out.best_lower = max(out.best_lower, lower)
        tau = out.best_lower * (1 + PRUNE_SLACK)
        tau_used = max(tau_used, tau)
        roots = norms ** (1.0 / depth)
        keep = roots > tau
        upper = max(tau_used, float(np.max(roots[keep], initial=0.0)))
        out.best_upper = min(out.best_upper, upper)
        out.records.append(
            DepthRecord(depth, upper, lower, float(np.max(entry)) ** (1.0 / depth), int(level.shape[0]), int(keep.sum()))
        )
        survivors = level[keep]
        if depth == max_depth:
            break
        if survivors.shape[0] * M.shape[0] > max_nodes:
            out.truncated = True
            break
        level = np.einsum("aij,bjk->baik", M, survivors).reshape(-1, M.shape[1], M.shape[2])
    return out


def _words(m: int, j: int, rng: np.random.Generator | None):
    if m**j <= MAX_WORDS:
        return np.array(list(itertools.product(range(m), repeat=j)), dtype=np.int64).reshape(-1, j)
    rng = rng or np.random.default_rng(0)
    return rng.integers(0, m, size=(MAX_WORDS, j))


def bochi_rhs(mats, d: int | None = None, seed: int = 0) -> float:
    """``max_j (max over length-j words of rho)^(1/j)`` for ``j = 1..upper_bound_N(d)``.

    Words are enumerated while there are at most ``2**16`` of them and
    sampled uniformly beyond that.
    """
    M = as_matrix_set(mats)
    d = M.shape[-1] if d is None else d
    rng = np.random.default_rng(seed)
    best = 0.0
    for j in range(1, upper_bound_N(d) + 1):
        words = _words(M.shape[0], j, rng)
        prod = M[words[:, 0]]
        for k in range(1, j):
            prod = M[words[:, k]] @ prod
        best = max(best, float(np.max(spectral_radii(prod))) ** (1.0 / j))
    return best


# ------------------------------------------------------------ inequality probe


@dataclass(frozen=True)
class InequalityRatio:
    L_raw: float
    L_norm: float
    R: float
    length: int
    degenerate: bool


def _pairs(n: int) -> list[tuple[int, int]]:
    return [(a, b) for a in range(n) for b in range(a, n)]


def inequality_ratios(batch) -> list[InequalityRatio]:
    """Vectorized :func:`inequality_ratio` for a ``(K, n, d, d)`` batch."""
    t = np.asarray(batch, dtype=float)
    if t.ndim != 4 or t.shape[-1] != t.shape[-2]:
        raise ValueError("expected a (K, n, d, d) batch")
    K, n, d = t.shape[0], t.shape[1], t.shape[-1]
    norms = np.abs(t).reshape(K, n, -1).max(axis=2)
    zero = (norms == 0).any(axis=1)
    safe = np.where(norms == 0, 1.0, norms)
    pairs = _pairs(n)
    subs = np.empty((K, len(pairs), d, d))
    idx = 0
    for a in range(n):
        prod = t[:, a]
        subs[:, idx] = prod
        idx += 1
        for b in range(a + 1, n):
            prod = t[:, b] @ prod
            subs[:, idx] = prod
            idx += 1
    rho = spectral_radii(subs.reshape(-1, d, d)).reshape(K, len(pairs))
    logn = np.log(safe)
    cum = np.concatenate([np.zeros((K, 1)), np.cumsum(logn, axis=1)], axis=1)
    R = np.zeros(K)
    for k, (a, b) in enumerate(pairs):
        denom = np.exp(cum[:, b + 1] - cum[:, a]) * float(d) ** (b - a + 1)
        R = np.maximum(R, rho[:, k] / denom)
    full = _pairs(n).index((0, n - 1))
    L_raw = np.abs(subs[:, full]).reshape(K, -1).max(axis=1) / np.exp(cum[:, n])
    L_raw[zero] = 0.0
    R[zero] = 0.0
    L_norm = L_raw / float(d) ** (n - 1)
    degenerate = zero | ((R == 0) & (L_raw > 0))
    return [InequalityRatio(float(L_raw[k]), float(L_norm[k]), float(R[k]), n, bool(degenerate[k])) for k in range(K)]


def inequality_ratio(t) -> InequalityRatio:
    """``L = ||A_n...A_1||_0 / prod ||A_i||_0`` and the normalized subproduct radius ``R``.

    ``R = max over a <= b of rho(A_b...A_a) / (d^(b-a+1) prod_{a<=i<=b} ||A_i||_0)``
    lies in ``[0, 1]``; ``L_norm = L_raw / d^(n-1)`` does too.  A zero factor,
    or ``R == 0`` with ``L > 0``, is flagged degenerate.
    """
    mats = np.stack([as_float_matrix(m) for m in t])
    return inequality_ratios(mats[None])[0]


@dataclass
class InequalityEnvelope:
    delta: float
    C: float
    points: list[tuple[float, float]]
    hull: list[tuple[float, float]]
    degenerate: list[int]
    violations: list[int]
    excluded_zero: int

    def to_json(self):
        return {
            "delta": self.delta,
            "C": self.C,
            "hull": [list(p) for p in self.hull],
            "samples_used": len(self.points),
            "degenerate": self.degenerate,
            "violations": self.violations,
            "zero_samples": self.excluded_zero,
        }


def _upper_hull(points: list[tuple[float, float]]) -> list[tuple[float, float]]:
    """Upper convex hull, left to right (Andrew's monotone chain)."""
    hull: list[tuple[float, float]] = []
    for p in sorted(set(points)):
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            if (x2 - x1) * (p[1] - y1) - (y2 - y1) * (p[0] - x1) >= 0:
                hull.pop()
            else:
                break
        hull.append(p)
    # keep one point per abscissa (the highest)
    out: list[tuple[float, float]] = []
    for p in hull:
        if out and out[-1][0] == p[0]:
            out[-1] = max(out[-1], p)
        else:
            out.append(p)
    return out


def fit_envelope(samples, d: int | None = None) -> InequalityEnvelope:
    """Fit ``log L <= log C + delta log R`` above every sample with ``R > 0``.

    ``samples`` holds ``(L, R)`` or ``(L, R, length)`` entries.  ``delta`` is
    the slope of the leftmost edge of the upper hull of ``(log R, log L)``
    (the small-``R`` behaviour), clipped to ``[1e-3, 1]``; ``C`` is then the
    least constant putting every sample on or below the line.  Samples with
    ``R == 0`` and ``L > 0`` are violations when their length is at least the
    known vanishing length for ``d``, and degenerate otherwise.
    """
    points, degenerate, violations = [], [], []
    zeros = 0
    N = best_known_N(d) if d is not None else None
    for i, s in enumerate(samples):
        L, R = float(s[0]), float(s[1])
        length = int(s[2]) if len(s) > 2 else None
        if R > 0:
            if L > 0:
                points.append((math.log(R), math.log(L)))
            continue
        if L == 0:
            zeros += 1
        elif N is not None and length is not None and length >= N:
            violations.append(i)
        else:
            degenerate.append(i)
    positive_R = sum(1 for s in samples if float(s[1]) > 0)
    if positive_R < 2:
        raise ValueError("need at least two samples with R > 0")
    if not points:
        return InequalityEnvelope(1.0, 0.0, [], [], degenerate, violations, zeros)
    hull = _upper_hull(points)
    if len(hull) >= 2:
        (x1, y1), (x2, y2) = hull[0], hull[1]
        slope = (y2 - y1) / (x2 - x1)
    else:
        slope = 1.0
    delta = min(1.0, max(DELTA_FLOOR, slope))
    logC = max(y - delta * x for x, y in points)
    return InequalityEnvelope(delta, math.exp(logC), points, hull, degenerate, violations, zeros)


# ------------------------------------------------------------------ sampling


@dataclass(frozen=True)
class ProbeRow:
    sample_id: int
    L_raw: float
    L_norm: float
    R: float
    length: int
    ensemble: str

    def as_csv(self):
        return [self.sample_id, repr(self.L_raw), repr(self.L_norm), repr(self.R), self.length, self.ensemble]


def _member_pool(d: int, n: int, rng: np.random.Generator, size: int = 16) -> np.ndarray:
    from .search import seed_chain

    return np.stack([seed_chain(d, n, QQ, rng) for _ in range(size)])


def _membership_moves(pool: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    """Rescale factors and conjugate by an elementary integer matrix (membership-preserving)."""
    n, d = pool.shape[1], pool.shape[-1]
    t = pool[rng.integers(0, pool.shape[0], size=count)].copy()
    t *= rng.choice(np.array([-2, -1, 1, 2]), size=(count, n))[:, :, None, None]
    if d > 1:
        i = rng.integers(0, d, size=count)
        j = (i + rng.integers(1, d, size=count)) % d
        c = rng.choice(np.array([-1, 1]), size=count)
        e = np.broadcast_to(np.eye(d, dtype=np.int64), (count, d, d)).copy()
        einv = e.copy()
        e[np.arange(count), i, j] = c
        einv[np.arange(count), i, j] = -c
        t = e[:, None] @ t @ einv[:, None]
    return t


def _sample_shard(args) -> list[ProbeRow]:
    d, n, ensemble, ids, child = args
    rng = np.random.default_rng(child)
    kinds = ENSEMBLES if ensemble == "mixed" else (ensemble,)
    labels = [kinds[i % len(kinds)] for i in ids]
    batch = np.empty((len(ids), n, d, d))
    names = list(labels)
    need_pool = any(k != "uniform" for k in labels)
    pool = _member_pool(d, n, rng) if need_pool else None
    for kind in kinds:
        rows = np.array([k for k, lab in enumerate(labels) if lab == kind], dtype=np.int64)
        if rows.size == 0:
            continue
        if kind == "uniform":
            batch[rows] = rng.uniform(-1.0, 1.0, size=(rows.size, n, d, d))
            continue
        members = _membership_moves(pool, rows.size, rng).astype(float)
        if kind == "nil-chain":
            batch[rows] = members
            continue
        eps = np.array(EPSILONS)[rng.integers(0, len(EPSILONS), size=rows.size)]
        scale = np.maximum(np.abs(members).reshape(rows.size, -1).max(axis=1), 1.0)
        noise = rng.uniform(-1.0, 1.0, size=members.shape)
        batch[rows] = members + (eps * scale)[:, None, None, None] * noise
        for r, e in zip(rows, eps):
            names[r] = f"near-nilpotent-{e:.0e}"
    ratios = inequality_ratios(batch)
    return [ProbeRow(i, q.L_raw, q.L_norm, q.R, q.length, nm) for i, q, nm in zip(ids, ratios, names)]


def probe(d: int, n: int, samples: int, ensemble: str = "mixed", seed: int = 0, workers: int = 1,
          shards: int = PROBE_SHARDS, chunk: int = 4096) -> list[ProbeRow]:
    """Sample tuples and return one :class:`ProbeRow` per tuple, in sample order."""
    if ensemble not in ENSEMBLES + ("mixed",):
        raise ValueError(f"unknown ensemble {ensemble!r}")
    if samples < 1:
        raise ValueError("samples must be positive")
    bounds = np.linspace(0, samples, shards + 1).astype(int)
    children = np.random.SeedSequence(seed).spawn(shards)
    jobs = []
    for s in range(shards):
        grand = children[s].spawn(max(1, math.ceil((bounds[s + 1] - bounds[s]) / chunk)))
        for c, start in enumerate(range(int(bounds[s]), int(bounds[s + 1]), chunk)):
            ids = list(range(start, min(int(bounds[s + 1]), start + chunk)))
            jobs.append((d, n, ensemble, ids, grand[c]))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_sample_shard, jobs))
    else:
        parts = [_sample_shard(j) for j in jobs]
    return [row for part in parts for row in part]


def write_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow(r.as_csv())


def probe_summary(rows, d: int) -> dict:
    """Envelope fit plus violation/degenerate counts for probe output."""
    samples = [(r.L_raw, r.R, r.length) for r in rows]
    N = best_known_N(d)
    violations = [r.sample_id for r in rows if r.R == 0 and r.L_raw > 0 and r.length >= N]
    degenerate = [r.sample_id for r in rows if r.R == 0 and r.L_raw > 0 and r.length < N]
    summary = {
        "samples": len(rows),
        "vanishing_length": N,
        "violations": violations,
        "degenerate": len(degenerate),
        "zero_samples": sum(1 for r in rows if r.R == 0 and r.L_raw == 0),
    }
    try:
        env = fit_envelope(samples, d)
        summary["envelope"] = {"delta": env.delta, "C": env.C, "hull": [list(p) for p in env.hull]}
    except ValueError as exc:
        summary["envelope"] = {"error": str(exc)}
    return summary

