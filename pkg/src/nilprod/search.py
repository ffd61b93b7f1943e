"""Vectorized exact nil-chain searches: exhaustive enumeration and random restarts.

Batches of tuples are held as int64 arrays.  Over GF(p) entries are
residues.  Over Q they are integers and every test runs modulo several
primes below 2**29 whose product exceeds twice an a-priori bound on the
entries being tested; an integer matrix with entries below that bound is
zero iff it is zero modulo every prime, so the verdicts are exact.

Determinism: the work is split into a fixed number of shards, each seeded by
``SeedSequence(seed).spawn(shards)[i]``; shards run in any order on any
number of workers and are merged in shard order.
"""

from __future__ import annotations

import functools
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import samplers
from .exact import QQ, ExactMatrix, Field
from .fixtures import witness_tuple
from .nilchain import ChainTuple, best_known_N, chain_product, first_non_nilpotent

log = logging.getLogger(__name__)

EXHAUSTIVE_CEILING = 2**30
DEFAULT_SHARDS = 8
ENTRY_CAP = 2**8
EXTENSION_BOX = 1


class SearchSpaceTooLarge(ValueError):
    def __init__(self, size: int, ceiling: int = EXHAUSTIVE_CEILING):
        self.size = size
        super().__init__(f"exhaustive state space {size} exceeds the ceiling {ceiling}")


@functools.cache
def _work_primes(count: int) -> tuple[int, ...]:
    from sympy import prevprime

    primes = []
    p = 2**29
    while len(primes) < count:
        p = prevprime(p)
        primes.append(p)
    return tuple(primes)


def primes_for_bound(bound: int) -> tuple[int, ...]:
    """Fewest work primes whose product exceeds ``2 * bound``."""
    need = (2 * bound + 1).bit_length()
    count = max(1, math.ceil(need / 28))
    while True:
        ps = _work_primes(count)
        if math.prod(ps) > 2 * bound:
            return ps
        count += 1


def _power_bound(entry_bound: int, d: int, length: int) -> int:
    """Bound on entries of ``X^d`` for ``X`` a product of ``length`` factors."""
    e = d ** (length - 1) * entry_bound**length
    return d ** (d - 1) * e**d


class Kernel:
    """Exact batched tests for one field and a stack of integer entry bounds."""

    def __init__(self, fld: Field, d: int, n: int, max_entry: int = 1):
        self.fld, self.d, self.n = fld, d, n
        if fld.is_rational:
            self.primes = primes_for_bound(_power_bound(max(1, max_entry), d, n))
        else:
            self.primes = (fld.modulus,)
        self.mods = np.array(self.primes, dtype=np.int64).reshape(-1, 1, 1, 1)

    def lift(self, t: np.ndarray) -> np.ndarray:
        """``(K, n, d, d)`` integers -> ``(m, K, n, d, d)`` residues."""
        return np.mod(t[None], self.mods[..., None])

    def _mm(self, a, b):
        return np.matmul(a, b) % self.mods

    def _nil(self, x) -> np.ndarray:
        """Mask of batch entries with ``x**d == 0`` (``x`` is ``(m, K, d, d)``)."""
        d = self.d
        result, base, k = None, x, d
        while k:
            if k & 1:
                result = base if result is None else self._mm(base, result)
            k >>= 1
            if k:
                base = self._mm(base, base)
        return ~result.reshape(result.shape[0], result.shape[1], -1).any(axis=(0, 2))

    def membership(self, t: np.ndarray) -> np.ndarray:
        """Exact nil-chain mask for integer tuples ``t`` of shape ``(K, n, d, d)``."""
        r = self.lift(t)
        K, n = t.shape[0], t.shape[1]
        alive = np.arange(K)
        for a in range(n):
            if alive.size == 0:
                break
            prod = r[:, alive, a]
            ok = self._nil(prod)
            alive, prod = alive[ok], prod[:, ok]
            for b in range(a + 1, n):
                if alive.size == 0:
                    break
                prod = self._mm(r[:, alive, b], prod)
                ok = self._nil(prod)
                alive, prod = alive[ok], prod[:, ok]
        mask = np.zeros(K, dtype=bool)
        mask[alive] = True
        return mask

    def product_zero(self, t: np.ndarray) -> np.ndarray:
        r = self.lift(t)
        prod = r[:, :, 0]
        for b in range(1, t.shape[1]):
            prod = self._mm(r[:, :, b], prod)
        return ~prod.reshape(prod.shape[0], prod.shape[1], -1).any(axis=(0, 2))


def to_array(chains) -> np.ndarray:
    return np.array([[m.rows for m in c.matrices] for c in chains], dtype=np.int64)


def to_chain(arr: np.ndarray, fld: Field) -> ChainTuple:
    return ChainTuple(ExactMatrix(m.tolist(), fld) for m in arr)


def verify_exactly(arr: np.ndarray, fld: Field) -> tuple[bool, bool]:
    """Independent re-check with fresh :class:`ExactMatrix` products: ``(member, product_zero)``."""
    t = to_chain(arr, fld)
    return first_non_nilpotent(t) is None, chain_product(t).is_zero()


@dataclass
class WitnessReport:
    purpose: str
    strategy: str
    field: str
    d: int
    n: int
    outcome: str
    witness: ChainTuple | None = None
    witnesses_found: int = 0
    members: int = 0
    examined: int = 0
    audited: int = 0
    state_space: int | None = None
    seed: int | None = None
    shards: int = 1
    shard_seeds: list[int] = field(default_factory=list)
    vanishing_length: int = 0
    move_stats: dict | None = None
    elapsed: float = field(default=0.0, compare=False)

    @property
    def falsifies_vanishing(self) -> bool:
        return self.witnesses_found > 0 and self.n >= self.vanishing_length

    def to_json(self) -> dict:
        return {
            "purpose": self.purpose,
            "strategy": self.strategy,
            "field": self.field,
            "d": self.d,
            "n": self.n,
            "outcome": self.outcome,
            "witness": self.witness.to_json() if self.witness is not None else None,
            "counters": {
                "examined": self.examined,
                "members": self.members,
                "witnesses": self.witnesses_found,
                "audited": self.audited,
            },
            "state_space": self.state_space,
            "vanishing_length": self.vanishing_length,
            "seed": self.seed,
            "shards": self.shards,
            "shard_seeds": self.shard_seeds,
        }


# ---------------------------------------------------------------- exhaustive


def _digits(start: int, stop: int, p: int, width: int) -> np.ndarray:
    idx = np.arange(start, stop, dtype=np.int64)
    out = np.empty((idx.size, width), dtype=np.int64)
    for k in range(width - 1, -1, -1):
        out[:, k] = idx % p
        idx //= p
    return out


@functools.cache
def nilpotent_matrices(p: int, d: int, chunk: int = 1 << 18) -> np.ndarray:
    """All nilpotent d x d matrices over GF(p), in base-p index order."""
    kern = Kernel(Field(p), d, 1)
    total = p ** (d * d)
    found = []
    for start in range(0, total, chunk):
        mats = _digits(start, min(total, start + chunk), p, d * d).reshape(-1, d, d)
        found.append(mats[kern._nil(mats[None])])
    return np.concatenate(found)


def _exhaustive_shard(args) -> dict:
    p, d, n, lo, hi, budget = args
    kern = Kernel(Field(p), d, n)
    nil = nilpotent_matrices(p, d)
    L = nil.shape[0]
    tuples = nil[lo:hi, None]          # (M, k, d, d)
    suffix = nil[lo:hi, None]          # suffix[:, i] = A_k ... A_(i+1)
    examined, first = 0, None
    members = witnesses = 0
    complete = True
    for k in range(1, n):
        new_t, new_s = [], []
        per = max(1, (1 << 16) // L)
        for s0 in range(0, tuples.shape[0], per):
            if examined >= budget:
                complete = False
                break
            t_chunk, s_chunk = tuples[s0 : s0 + per], suffix[s0 : s0 + per]
            M = t_chunk.shape[0]
            ext = np.broadcast_to(nil[None], (M, L, d, d)).reshape(M * L, 1, d, d)
            prev = np.repeat(s_chunk, L, axis=0)
            cand_s = (ext[None] @ prev[None]) % kern.mods  # (1, M*L, k, d, d)
            cand_s = cand_s[0]
            ok = np.ones(M * L, dtype=bool)
            for i in range(k):
                ok &= kern._nil(cand_s[None, :, i])
            examined += M * L
            cand_t = np.concatenate([np.repeat(t_chunk, L, axis=0), ext], axis=1)[ok]
            cand_s = np.concatenate([cand_s, ext], axis=1)[ok]
            new_t.append(cand_t)
            new_s.append(cand_s)
        tuples = np.concatenate(new_t) if new_t else np.empty((0, k + 1, d, d), np.int64)
        suffix = np.concatenate(new_s) if new_s else np.empty((0, k + 1, d, d), np.int64)
        if not complete:
            break
    if complete:
        members = tuples.shape[0]
        nz = suffix[:, 0].reshape(members, -1).any(axis=1)
        witnesses = int(nz.sum())
        if witnesses:
            first = tuples[np.argmax(nz)]
    return {
        "examined": examined,
        "members": members,
        "witnesses": witnesses,
        "first": first,
        "complete": complete,
    }


def _run_shards(fn, jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def exhaustive(d: int, n: int, fld: Field, *, purpose: str = "verify", budget: int | None = None,
               shards: int = DEFAULT_SHARDS, workers: int = 1,
               ceiling: int = EXHAUSTIVE_CEILING) -> WitnessReport:
    """Enumerate every nil-chain of length ``n`` over GF(p) by prefix extension."""
    t0 = time.perf_counter()
    if fld.is_rational:
        raise ValueError("exhaustive mode needs a finite field")
    if n < 1:
        raise ValueError("n must be at least 1")
    p = fld.modulus
    size = p ** (n * d * d)
    if size > ceiling:
        raise SearchSpaceTooLarge(size, ceiling)
    budget = size if budget is None else budget
    nil = nilpotent_matrices(p, d)
    L = nil.shape[0]
    shards = max(1, min(shards, L))
    bounds = np.linspace(0, L, shards + 1).astype(int)
    jobs = [(p, d, n, int(bounds[i]), int(bounds[i + 1]), budget) for i in range(shards)]
    results = _run_shards(_exhaustive_shard, jobs, workers)
    examined = p ** (d * d) + sum(r["examined"] for r in results)
    complete = all(r["complete"] for r in results)
    report = WitnessReport(
        purpose=purpose, strategy="exhaustive", field=fld.name, d=d, n=n,
        outcome="exhausted" if complete else "budget-reached",
        examined=examined, members=sum(r["members"] for r in results),
        witnesses_found=sum(r["witnesses"] for r in results),
        state_space=size, shards=shards, vanishing_length=best_known_N(d),
    )
    for r in results:
        if r["first"] is not None:
            member, zero = verify_exactly(r["first"], fld)
            if not member or zero:
                raise RuntimeError("witness failed independent re-verification")
            report.witness = to_chain(r["first"], fld)
            report.outcome = "witness"
            break
    report.elapsed = time.perf_counter() - t0
    return report


# ------------------------------------------------------------ random restart


def _extension_candidates(fld: Field, d: int, rng: np.random.Generator) -> np.ndarray:
    if fld.is_rational:
        return _digits(0, (2 * EXTENSION_BOX + 1) ** (d * d), 2 * EXTENSION_BOX + 1, d * d).reshape(-1, d, d) - EXTENSION_BOX
    total = fld.modulus ** (d * d)
    if total <= 1 << 16:
        return _digits(0, total, fld.modulus, d * d).reshape(-1, d, d)
    return rng.integers(0, fld.modulus, size=(1 << 14, d, d))


@functools.lru_cache(maxsize=64)
def _valid_extensions(key: bytes, n: int, d: int, modulus: int | None, side: str, pool_key: bytes) -> np.ndarray:
    fld = Field(modulus)
    base = np.frombuffer(key, dtype=np.int64).reshape(n, d, d)
    pool = np.frombuffer(pool_key, dtype=np.int64).reshape(-1, d, d)
    if side == "append":
        cand = np.concatenate([np.broadcast_to(base, (pool.shape[0], n, d, d)), pool[:, None]], axis=1)
    else:
        cand = np.concatenate([pool[:, None], np.broadcast_to(base, (pool.shape[0], n, d, d))], axis=1)
    max_entry = int(max(np.abs(base).max(), np.abs(pool).max(), 1))
    kern = Kernel(fld, d, n + 1, max_entry)
    return pool[kern.membership(np.ascontiguousarray(cand))]


def extend_chain(t: np.ndarray, fld: Field, rng: np.random.Generator, length: int) -> np.ndarray:
    """Grow a member tuple to ``length`` by random membership-preserving appends/prepends."""
    d = t.shape[-1]
    pool = _extension_candidates(fld, d, rng)
    pool_key = np.ascontiguousarray(pool, dtype=np.int64).tobytes()
    while t.shape[0] < length:
        side = "append" if rng.random() < 0.5 else "prepend"
        valid = _valid_extensions(np.ascontiguousarray(t).tobytes(), t.shape[0], d, fld.modulus, side, pool_key)
        nonzero = valid[valid.reshape(valid.shape[0], -1).any(axis=1)]
        choice = nonzero if nonzero.shape[0] else valid
        e = choice[int(rng.integers(0, choice.shape[0]))]
        t = np.concatenate([t, e[None]]) if side == "append" else np.concatenate([e[None], t])
    return t


def seed_chain(d: int, n: int, fld: Field, rng: np.random.Generator) -> np.ndarray:
    """One member tuple as an int64 array, from a randomly chosen construction."""
    kinds = list(samplers.GENERATORS)
    if d == 3:
        kinds.append("fixture")
    kind = kinds[int(rng.integers(0, len(kinds)))]
    if kind != "fixture":
        return to_array([samplers.GENERATORS[kind](d, n, fld, rng)])[0]
    if n <= 4:
        return to_array([samplers.fixture_window(n, fld, rng)])[0]
    base = to_array([ChainTuple(witness_tuple(fld))])[0]
    grown = extend_chain(base, fld, rng, n)
    p, q = samplers.conjugator(samplers.random_unimodular(d, fld, rng))
    mats = []
    for m in grown:
        c = int(rng.choice([-1, 1])) if fld.is_rational else int(rng.integers(1, fld.modulus))
        mats.append(samplers.content_normalize((p @ ExactMatrix(m.tolist(), fld) @ q).scale(c)))
    return to_array([ChainTuple(mats)])[0]


def _content_normalize_arr(t: np.ndarray) -> np.ndarray:
    g = np.gcd.reduce(np.abs(t).reshape(*t.shape[:-2], -1), axis=-1)
    g[g == 0] = 1
    return t // g[..., None, None]


class _Mover:
    """Membership-preserving moves and mutations applied to a batch of chains."""

    KINDS = ("rescale", "conjugate", "diagonal", "entry", "nilpotent", "rank-one")

    def __init__(self, d: int, n: int, fld: Field, rng: np.random.Generator, pool_size: int = 128):
        self.d, self.n, self.fld, self.rng = d, n, fld, rng
        self.p = fld.modulus
        self.nil_pool = to_array([ChainTuple([samplers.random_nilpotent(d, fld, rng)]) for _ in range(pool_size)])[:, 0]
        self.r1_pool = to_array([ChainTuple([samplers.random_rank_one_nilpotent(d, fld, rng)]) for _ in range(pool_size)])[:, 0]

    def _nonzero_scalars(self, size, choices=(-3, -2, -1, 1, 2, 3)):
        if self.p is None:
            return self.rng.choice(np.array(choices), size=size)
        return self.rng.integers(1, self.p, size=size)

    def propose(self, state: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        rng, d, n, p = self.rng, self.d, self.n, self.p
        K = state.shape[0]
        kind = rng.integers(0, len(self.KINDS), size=K)
        slot = rng.integers(0, n, size=K)
        cand = state.copy()

        sel = np.nonzero(kind == 0)[0]
        if sel.size:
            cand[sel, slot[sel]] *= self._nonzero_scalars(sel.size)[:, None, None]

        sel = np.nonzero(kind == 1)[0]
        if sel.size and d > 1:
            i = rng.integers(0, d, size=sel.size)
            j = (i + rng.integers(1, d, size=sel.size)) % d
            c = self._nonzero_scalars(sel.size, (-2, -1, 1, 2))
            e = np.broadcast_to(np.eye(d, dtype=np.int64), (sel.size, d, d)).copy()
            einv = e.copy()
            e[np.arange(sel.size), i, j] = c
            einv[np.arange(sel.size), i, j] = -c
            cand[sel] = e[:, None] @ cand[sel] @ einv[:, None]

        sel = np.nonzero(kind == 2)[0]
        if sel.size:
            diag = self._nonzero_scalars((sel.size, d), (-2, -1, 1, 2))
            if p is None:
                adj = np.prod(diag, axis=1, keepdims=True) // diag
            else:
                adj = np.array([[pow(int(x), -1, p) for x in row] for row in diag], dtype=np.int64)
            cand[sel] = diag[:, None, :, None] * cand[sel] * adj[:, None, None, :]

        sel = np.nonzero(kind == 3)[0]
        if sel.size:
            r = rng.integers(0, d, size=sel.size)
            c = rng.integers(0, d, size=sel.size)
            if p is None:
                cand[sel, slot[sel], r, c] += rng.choice(np.array([-2, -1, 1, 2]), size=sel.size)
            else:
                cand[sel, slot[sel], r, c] = rng.integers(0, p, size=sel.size)

        sel = np.nonzero(kind == 4)[0]
        if sel.size:
            cand[sel, slot[sel]] = self.nil_pool[rng.integers(0, self.nil_pool.shape[0], size=sel.size)]

        sel = np.nonzero(kind == 5)[0]
        if sel.size:
            cand[sel, slot[sel]] = self.r1_pool[rng.integers(0, self.r1_pool.shape[0], size=sel.size)]

        if p is None:
            cand = _content_normalize_arr(cand)
        else:
            cand %= p
        return cand, kind


def _random_restart_shard(args) -> dict:
    d, n, modulus, budget, child, stop_at_witness, batch, n_seeds, audit = args
    fld = Field(modulus)
    rng = np.random.default_rng(child)
    seeds = np.stack([seed_chain(d, n, fld, rng) for _ in range(n_seeds)])
    mover = _Mover(d, n, fld, rng)
    examined = members = witnesses = audited = 0
    first = None
    accepted_by_kind = np.zeros(len(_Mover.KINDS), dtype=np.int64)
    proposed_by_kind = np.zeros(len(_Mover.KINDS), dtype=np.int64)

    def evaluate(cand: np.ndarray) -> np.ndarray:
        nonlocal members, witnesses, first, audited
        kern = Kernel(fld, d, n, int(np.abs(cand).max(initial=1)))
        mask = kern.membership(cand)
        idx = np.nonzero(mask)[0]
        members += idx.size
        if idx.size:
            nz = idx[~kern.product_zero(cand[idx])]
            for k in nz:
                member, zero = verify_exactly(cand[k], fld)
                if not member or zero:
                    raise RuntimeError("vectorized verdict disagrees with exact re-verification")
                witnesses += 1
                if first is None:
                    first = cand[k].copy()
            for k in idx[: max(0, audit - audited)]:
                member, zero = verify_exactly(cand[k], fld)
                if not member or zero != (k not in set(nz.tolist())):
                    raise RuntimeError("vectorized verdict disagrees with exact re-verification")
                audited += 1
        return mask

    take = min(budget, seeds.shape[0])
    if not evaluate(seeds[:take]).all():
        raise RuntimeError("a constructed seed chain failed the membership test")
    examined += take
    state = seeds[rng.integers(0, take, size=batch)]
    stale = np.zeros(state.shape[0], dtype=np.int64)
    while examined < budget and not (stop_at_witness and first is not None):
        k = min(state.shape[0], budget - examined)
        cand, kind = mover.propose(state[:k])
        mask = evaluate(cand)
        examined += k
        np.add.at(proposed_by_kind, kind, 1)
        np.add.at(accepted_by_kind, kind[mask], 1)
        state[:k][mask] = cand[mask]
        stale[:k] = np.where(mask, 0, stale[:k] + 1)
        big = np.abs(state).reshape(state.shape[0], -1).max(axis=1) > ENTRY_CAP
        restart = big | (stale > 20) | (rng.random(state.shape[0]) < 0.02)
        if restart.any():
            state[restart] = seeds[rng.integers(0, seeds.shape[0], size=int(restart.sum()))]
            stale[restart] = 0
    return {
        "examined": examined,
        "members": members,
        "witnesses": witnesses,
        "first": first,
        "audited": audited,
        "accepted_by_kind": accepted_by_kind.tolist(),
        "proposed_by_kind": proposed_by_kind.tolist(),
    }


def random_restart(d: int, n: int, fld: Field, budget: int, seed: int, *, purpose: str = "search",
                   stop_at_witness: bool = True, shards: int = DEFAULT_SHARDS, workers: int = 1,
                   batch: int = 4096, n_seeds: int = 24, audit: int = 8) -> WitnessReport:
    """Random-restart local search over nil-chains; every candidate is fully re-tested."""
    t0 = time.perf_counter()
    if budget <= 0:
        raise ValueError("budget must be positive")
    if n < 1:
        raise ValueError("n must be at least 1")
    shards = max(1, min(shards, budget))
    children = np.random.SeedSequence(seed).spawn(shards)
    shard_seeds = [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]
    base, extra = divmod(budget, shards)
    jobs = [
        (d, n, fld.modulus, base + (i < extra), children[i], stop_at_witness, batch, n_seeds, audit)
        for i in range(shards)
    ]
    for i, s in enumerate(shard_seeds):
        log.debug("shard %d sub-seed %d", i, s)
    results = _run_shards(_random_restart_shard, jobs, workers)
    report = WitnessReport(
        purpose=purpose, strategy="random-restart", field=fld.name, d=d, n=n,
        outcome="budget-reached",
        examined=sum(r["examined"] for r in results),
        members=sum(r["members"] for r in results),
        witnesses_found=sum(r["witnesses"] for r in results),
        audited=sum(r["audited"] for r in results),
        seed=seed, shards=shards, shard_seeds=shard_seeds, vanishing_length=best_known_N(d),
    )
    for r in results:
        if r["first"] is not None:
            report.witness = to_chain(r["first"], fld)
            report.outcome = "witness"
            break
    report.elapsed = time.perf_counter() - t0
    report.move_stats = {
        "proposed": np.sum([r["proposed_by_kind"] for r in results], axis=0).tolist(),
        "accepted": np.sum([r["accepted_by_kind"] for r in results], axis=0).tolist(),
        "kinds": list(_Mover.KINDS),
    }
    return report


def verify_vanishing(d: int, n: int, fld: Field = QQ, source: str = "enumerator", budget: int = 10**5,
                     seed: int = 0, workers: int = 1, shards: int = DEFAULT_SHARDS) -> WitnessReport:
    """Enumerate or sample nil-chains of length ``n`` and count nonzero chain products."""
    if budget <= 0:
        raise ValueError("budget must be positive")
    if source == "enumerator":
        return exhaustive(d, n, fld, purpose="verify", budget=budget, shards=shards, workers=workers)
    if source == "sampler":
        return random_restart(d, n, fld, budget, seed, purpose="verify", stop_at_witness=False,
                              shards=shards, workers=workers)
    raise ValueError(f"unknown source {source!r}")


def search_witness(d: int, n: int, fld: Field = QQ, strategy: str = "random-restart", budget: int = 10**5,
                   seed: int = 0, workers: int = 1, shards: int = DEFAULT_SHARDS) -> WitnessReport:
    """Look for a nil-chain of length ``n`` with nonzero chain product."""
    if strategy == "exhaustive":
        return exhaustive(d, n, fld, purpose="search", budget=budget, shards=shards, workers=workers)
    if strategy == "random-restart":
        return random_restart(d, n, fld, budget, seed, purpose="search", stop_at_witness=True,
                              shards=shards, workers=workers)
    raise ValueError(f"unknown strategy {strategy!r}")
