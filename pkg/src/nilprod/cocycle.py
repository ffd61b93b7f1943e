"""Linear cocycles over exactly simulated measure-preserving systems.

Base systems are iterated without rounding: the Bernoulli shift and the
doubling map act on pre-drawn symbol strings by advancing a read position,
and circle rotations use ``Fraction`` angles.  Running matrix products are
rescaled by a power of two every ``renorm`` steps (an exact operation), with
the logarithm of the scale accumulated separately.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .roots import spectral_radii

RENORM_EVERY = 25
NEG_INF = -math.inf


# ---------------------------------------------------------------- base systems


@dataclass(frozen=True)
class BaseSystem:
    """``kind`` is ``"bernoulli"``, ``"doubling"`` or ``"rotation"``."""

    kind: str
    probs: tuple[float, ...] = (0.5, 0.5)
    angle: Fraction = Fraction(0)

    def __post_init__(self):
        if self.kind not in ("bernoulli", "doubling", "rotation"):
            raise ValueError(f"unknown base system {self.kind!r}")
        if self.kind == "doubling" and tuple(self.probs) != (0.5, 0.5):
            raise ValueError("the doubling map uses fair bits")
        if self.kind == "bernoulli":
            if any(p < 0 for p in self.probs) or not math.isclose(sum(self.probs), 1.0, abs_tol=1e-12):
                raise ValueError("bernoulli probabilities must be nonnegative and sum to 1")

    @property
    def alphabet(self) -> int:
        return len(self.probs)

    def sample(self, rng: np.random.Generator, length: int) -> "SymbolState | AngleState":
        """A random state: ``length`` i.i.d. symbols, or a uniform dyadic angle."""
        if self.kind == "rotation":
            return AngleState(Fraction(int(rng.integers(0, 2**62)), 2**62))
        return SymbolState(rng.choice(self.alphabet, size=length, p=list(self.probs)).astype(np.int8))

    def sample_many(self, rng: np.random.Generator, count: int, length: int) -> np.ndarray:
        """``(count, length)`` symbol array for the symbolic systems."""
        if self.kind == "rotation":
            raise ValueError("rotation states are angles, not symbol strings")
        return rng.choice(self.alphabet, size=(count, length), p=list(self.probs)).astype(np.int8)


@dataclass(frozen=True)
class SymbolState:
    """Point of a shift space: ``symbols[pos:]`` is the visible future."""

    symbols: np.ndarray
    pos: int = 0

    @property
    def current(self) -> int:
        if self.pos >= len(self.symbols):
            raise IndexError(f"symbol prefix of length {len(self.symbols)} exhausted; draw a longer prefix")
        return int(self.symbols[self.pos])

    def value(self) -> Fraction:
        """Binary value ``0.b_pos b_pos+1 ...`` of the visible prefix."""
        bits = self.symbols[self.pos :]
        return sum((Fraction(int(b), 2 ** (k + 1)) for k, b in enumerate(bits)), Fraction(0))


@dataclass(frozen=True)
class AngleState:
    angle: Fraction


def orbit_step(system: BaseSystem, state):
    """Apply the base map once, exactly."""
    if system.kind == "rotation":
        return AngleState((state.angle + system.angle) % 1)
    if state.pos >= len(state.symbols):
        raise IndexError(f"symbol prefix of length {len(state.symbols)} exhausted; draw a longer prefix")
    return SymbolState(state.symbols, state.pos + 1)


@dataclass
class CocycleSpec:
    """Base system plus a generator: a table indexed by the current symbol, or a function of the angle."""

    base: BaseSystem
    table: np.ndarray | None = None
    func: Callable[[Fraction], np.ndarray] | None = None

    def __post_init__(self):
        if (self.table is None) == (self.func is None):
            raise ValueError("give exactly one of a matrix table or an angle function")
        if self.table is not None:
            self.table = np.asarray(self.table, dtype=float)
            if self.table.ndim != 3 or self.table.shape[1] != self.table.shape[2]:
                raise ValueError("the table must have shape (m, d, d)")
            if not np.all(np.isfinite(self.table)):
                raise ValueError("matrix entries must be finite")
            if self.base.kind != "rotation" and self.table.shape[0] != self.base.alphabet:
                raise ValueError("one matrix per symbol is required")

    @property
    def d(self) -> int:
        if self.table is not None:
            return self.table.shape[-1]
        return np.asarray(self.func(Fraction(0))).shape[-1]

    def generator(self, state) -> np.ndarray:
        if self.func is not None:
            return np.asarray(self.func(state.angle), dtype=float)
        return self.table[state.current]

    @classmethod
    def from_json(cls, obj: dict) -> "CocycleSpec":
        """``{"base": "bernoulli"|"doubling", "probs": [...], "matrices": [...]}``."""
        kind = obj.get("base", "bernoulli")
        mats = obj["matrices"]
        probs = tuple(obj.get("probs", [1.0 / len(mats)] * len(mats)))
        return cls(BaseSystem(kind, probs), table=np.array(mats, dtype=float))

    def to_json(self) -> dict:
        if self.table is None:
            raise ValueError("function generators are not serializable")
        return {"base": self.base.kind, "probs": list(self.base.probs), "matrices": self.table.tolist()}


def cocycle_product(spec: CocycleSpec, x, n: int) -> np.ndarray:
    """``A^n(x) = A(T^(n-1) x) ... A(x)`` with ``A^0 = I``."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    out = np.eye(spec.d)
    s = x
    for _ in range(n):
        out = spec.generator(s) @ out
        s = orbit_step(spec.base, s)
    return out


# ------------------------------------------------------------ Lyapunov series


@dataclass
class LyapunovSeries:
    """Rows ``(n, log(d ||A^n||_0)/n, log rho(A^n)/n)``; ``-inf`` marks a zero product."""

    n: np.ndarray
    norm: np.ndarray
    radius: np.ndarray

    def rows(self):
        return list(zip(self.n.tolist(), self.norm.tolist(), self.radius.tolist()))


def _pow2_rescale(prod: np.ndarray, logscale: np.ndarray) -> None:
    """Divide each matrix by a power of two so its max entry lies in [0.5, 1)."""
    top = np.abs(prod).reshape(prod.shape[0], -1).max(axis=1)
    live = top > 0
    _, e = np.frexp(top[live])
    prod[live] = np.ldexp(prod[live], -e[:, None, None])
    logscale[live] += e * math.log(2.0)


def run_series(step_mats: Callable[[int], np.ndarray], K: int, d: int, n_max: int, stride: int = 1,
               renorm: int = RENORM_EVERY) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batched core: ``step_mats(t)`` returns the ``(K, d, d)`` generators applied at step ``t``.

    Returns ``(ns, norm, radius)`` with the two columns shaped ``(K, len(ns))``.
    """
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    if stride < 1 or renorm < 1:
        raise ValueError("stride and renorm must be positive")
    prod = np.broadcast_to(np.eye(d), (K, d, d)).copy()
    logscale = np.zeros(K)
    ns = np.arange(stride, n_max + 1, stride)
    norm = np.empty((K, ns.size))
    radius = np.empty((K, ns.size))
    col = 0
    logd = math.log(d)
    for t in range(n_max):
        prod = step_mats(t) @ prod
        n = t + 1
        if n % renorm == 0:
            if not np.all(np.isfinite(prod)):
                raise OverflowError(f"product overflowed before rescaling at step {n}; lower the rescaling period")
            _pow2_rescale(prod, logscale)
        if n % stride == 0:
            if not np.all(np.isfinite(prod)):
                raise OverflowError(f"product overflowed at step {n}; lower the rescaling period")
            top = np.abs(prod).reshape(K, -1).max(axis=1)
            rho = spectral_radii(prod)
            with np.errstate(divide="ignore"):
                norm[:, col] = np.where(top > 0, (np.log(top) + logscale + logd) / n, NEG_INF)
                radius[:, col] = np.where(rho > 0, (np.log(rho) + logscale) / n, NEG_INF)
            col += 1
    return ns, norm, radius


def lyapunov_series(spec: CocycleSpec, x, n_max: int, stride: int = 1, renorm: int = RENORM_EVERY) -> LyapunovSeries:
    """Normalized log max-norm (times d) and log spectral radius along one orbit."""
    if spec.table is not None and isinstance(x, SymbolState):
        sym = np.asarray(x.symbols[x.pos : x.pos + n_max])
        if sym.size < n_max:
            raise IndexError(f"symbol prefix too short for n_max={n_max}; draw a longer prefix")
        ns, norm, radius = run_series(lambda t: spec.table[sym[t : t + 1]], 1, spec.d, n_max, stride, renorm)
        return LyapunovSeries(ns, norm[0], radius[0])
    states = [x]

    def step(t):
        s = states[0]
        states[0] = orbit_step(spec.base, s)
        return spec.generator(s)[None]

    ns, norm, radius = run_series(step, 1, spec.d, n_max, stride, renorm)
    return LyapunovSeries(ns, norm[0], radius[0])


def limsup_tail(ns: np.ndarray, radius: np.ndarray, n: int) -> np.ndarray:
    """Running max of the radius column over the window ``[n/2, n]``."""
    window = (ns >= n / 2) & (ns <= n)
    return np.max(radius[..., window], axis=-1)


def _gap(lam: np.ndarray, est: np.ndarray) -> np.ndarray:
    both = np.isneginf(lam) & np.isneginf(est)
    with np.errstate(invalid="ignore"):
        g = np.abs(lam - est)
    return np.where(both, 0.0, g)


@dataclass
class GapReport:
    checkpoints: list[int]
    lam: np.ndarray
    limsup: np.ndarray
    gap: np.ndarray
    seeds: int
    excess: np.ndarray  # per seed: max over n of (radius column - norm column)

    def quantiles(self, qs: Sequence[float] = (0.5, 0.9, 0.95, 1.0)) -> dict:
        return {
            str(n): {f"q{int(round(100 * q))}": float(np.quantile(self.gap[:, k], q)) for q in qs}
            for k, n in enumerate(self.checkpoints)
        }

    def fraction_decreasing(self, i: int = 0, j: int = -1) -> float:
        return float(np.mean(self.gap[:, j] < self.gap[:, i]))

    def to_json(self) -> dict:
        return {
            "seeds": self.seeds,
            "checkpoints": self.checkpoints,
            "quantiles": self.quantiles(),
            "fraction_decreasing": self.fraction_decreasing() if len(self.checkpoints) > 1 else None,
            "max_radius_minus_norm": float(np.max(self.excess)),
            "per_seed": [
                {"lambda": self.lam[s].tolist(), "limsup": self.limsup[s].tolist(), "gap": self.gap[s].tolist()}
                for s in range(self.seeds)
            ],
        }


def berger_wang_gap(spec: CocycleSpec, symbols: np.ndarray, checkpoints: Sequence[int], stride: int = 1,
                    renorm: int = RENORM_EVERY) -> GapReport:
    """Per-seed ``|lambda_hat - limsup estimate|`` at each checkpoint ``n``.

    ``symbols`` is a ``(K, >= max(checkpoints))`` array of orbit seeds for a
    symbolic base system; ``lambda_hat`` is the norm column at ``n`` and the
    estimate is :func:`limsup_tail` of the radius column.
    """
    if spec.table is None:
        raise ValueError("batched gaps need a symbol-indexed generator table")
    checkpoints = sorted(int(c) for c in checkpoints)
    n_max = checkpoints[-1]
    symbols = np.asarray(symbols)
    if symbols.shape[1] < n_max:
        raise IndexError("symbol prefixes are shorter than the last checkpoint")
    if any(c % stride for c in checkpoints):
        raise ValueError("checkpoints must be multiples of the stride")
    table = spec.table
    ns, norm, radius = run_series(lambda t: table[symbols[:, t]], symbols.shape[0], spec.d, n_max, stride, renorm)
    lam = np.stack([norm[:, np.searchsorted(ns, c)] for c in checkpoints], axis=1)
    est = np.stack([limsup_tail(ns, radius, c) for c in checkpoints], axis=1)
    with np.errstate(invalid="ignore"):
        diff = np.where(np.isneginf(radius), NEG_INF, radius - norm)
    return GapReport(checkpoints, lam, est, _gap(lam, est), symbols.shape[0], np.max(diff, axis=1))


# ------------------------------------------------------------------ recurrence


def in_cylinder(bits: np.ndarray, prefix: Sequence[int], pos: int = 0) -> bool:
    k = len(prefix)
    return len(bits) >= pos + k and bool(np.array_equal(bits[pos : pos + k], np.asarray(prefix, dtype=bits.dtype)))


def _grid(gamma: Fraction) -> list[Fraction]:
    step = gamma / 2
    pts = [k * step for k in range(int(1 / step) + 1)]
    if pts[-1] != 1:
        pts.append(Fraction(1))
    return pts


def recurrence_N0(bits: np.ndarray, prefix: Sequence[int], gamma, n_probe: int) -> int | None:
    """Smallest ``n`` such that every ``n' in [n, n_probe]`` passes the return-time test.

    ``bits`` is the orbit's symbol string under the doubling map (``T^l x`` is
    ``bits[l:]``) and ``U`` is the cylinder of strings starting with
    ``prefix``.  ``n'`` passes when every ``t`` on the grid
    ``{0, gamma/2, gamma, ...} u {1}`` has a return time ``l in [1, n']`` with
    ``|l/n' - t| < gamma``.  Returns ``None`` if ``n_probe`` itself fails.
    """
    gamma = Fraction(gamma).limit_denominator(10**12) if isinstance(gamma, float) else Fraction(gamma)
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    bits = np.asarray(bits)
    k = len(prefix)
    if not in_cylinder(bits, prefix):
        raise ValueError("the starting point is not in U")
    if len(bits) < n_probe + k:
        raise IndexError(f"need at least {n_probe + k} bits")
    windows = np.lib.stride_tricks.sliding_window_view(bits[1 : n_probe + k], k)
    hits = np.all(windows == np.asarray(prefix, dtype=bits.dtype), axis=1)[:n_probe]
    # count[m] = number of return times l in [1, m]
    count = np.concatenate([[0], np.cumsum(hits)])
    nprime = np.arange(1, n_probe + 1, dtype=np.int64)
    ok = np.ones(n_probe, dtype=bool)
    a, b = gamma.numerator, gamma.denominator
    for t in _grid(gamma):
        p, q = t.numerator, t.denominator
        # l > n'(t - gamma) and l < n'(t + gamma), with t - gamma = (p b - a q) / (q b)
        lo_num, hi_num, den = p * b - a * q, p * b + a * q, q * b
        lo = np.maximum(nprime * lo_num // den + 1, 1)
        hi = np.minimum(-((-nprime * hi_num) // den) - 1, nprime)
        ok &= (hi >= lo) & (count[np.clip(hi, 0, n_probe)] - count[np.clip(lo - 1, 0, n_probe)] > 0)
    if not ok[-1]:
        return None
    bad = np.nonzero(~ok)[0]
    return int(bad[-1] + 2) if bad.size else 1


def recurrence_oracle(bits, prefix, gamma, n_probe: int) -> int | None:
    """Direct scan of the definition, for testing on small inputs."""
    gamma = Fraction(gamma)
    hits = [l for l in range(1, n_probe + 1) if in_cylinder(np.asarray(bits), prefix, l)]

    def passes(n):
        return all(any(l <= n and abs(Fraction(l, n) - t) < gamma for l in hits) for t in _grid(gamma))

    if not passes(n_probe):
        return None
    n = n_probe
    while n > 1 and passes(n - 1):
        n -= 1
    return n


# --------------------------------------------------------- flat counterexample


@dataclass(frozen=True)
class PlanarIsometry:
    """``x -> rot(2 pi theta) x + v`` with an exact rotation fraction."""

    theta: Fraction
    v: tuple[float, float]

    def __matmul__(self, other: "PlanarIsometry") -> "PlanarIsometry":
        c, s = _cos_sin(self.theta)
        x, y = other.v
        return PlanarIsometry((self.theta + other.theta) % 1, (c * x - s * y + self.v[0], s * x + c * y + self.v[1]))

    def apply(self, p) -> tuple[float, float]:
        c, s = _cos_sin(self.theta)
        return (c * p[0] - s * p[1] + self.v[0], s * p[0] + c * p[1] + self.v[1])

    def stable_length(self) -> float:
        """Translation length for a pure translation, 0 otherwise (rotations fix a point)."""
        return math.hypot(*self.v) if self.theta == 0 else 0.0


def _cos_sin(theta: Fraction) -> tuple[float, float]:
    if theta == 0:
        return 1.0, 0.0
    ang = 2 * math.pi * float(theta)
    return math.cos(ang), math.sin(ang)


def flat_generator(theta: Fraction, a: float) -> PlanarIsometry:
    """``x -> z x + z^2 a`` for ``z = exp(2 pi i theta)``, i.e. rotate, translate by ``a``, rotate by ``z^2``."""
    c, s = _cos_sin((2 * theta) % 1)
    return PlanarIsometry(Fraction(theta) % 1, (c * a, s * a))


def irrational_surrogate(n_max: int, below: int = 2**61) -> Fraction:
    """``p/q`` with ``q`` prime and ``2^n != 1 (mod q)`` for every ``n <= n_max``.

    Such a point is not periodic for the doubling map within ``n_max`` steps.
    """
    from sympy import prevprime

    q = below
    while True:
        q = prevprime(q)
        r, ok = 1, True
        for _ in range(n_max):
            r = r * 2 % q
            if r == 1:
                ok = False
                break
        if ok:
            p = int(q * (math.sqrt(5) - 1) / 2)
            return Fraction(p, q)


@dataclass
class FlatSeries:
    n: list[int]
    drift: list[float]
    stable: list[float]
    rotation: list[Fraction]

    def rows(self):
        return list(zip(self.n, self.drift, self.stable))


def flat_counterexample(a: float, theta, x=(1.0, 0.5), n_max: int = 10**5, stride: int = 1) -> FlatSeries:
    """Compose ``A^(n+1)(z) = A(T^n z) A^n(z)`` for the flat cocycle and record
    ``d(A^n(z) x, x)/n`` and the stable length of ``A^n(z)``."""
    if a == 0:
        raise ValueError("the translation a must be nonzero")
    theta = Fraction(theta) % 1
    h = PlanarIsometry(Fraction(0), (0.0, 0.0))
    z = theta
    out = FlatSeries([], [], [], [])
    for n in range(1, n_max + 1):
        h = flat_generator(z, a) @ h
        z = (2 * z) % 1
        if n % stride == 0:
            px, py = h.apply(x)
            out.n.append(n)
            out.drift.append(math.hypot(px - x[0], py - x[1]) / n)
            out.stable.append(h.stable_length())
            out.rotation.append(h.theta)
    return out


def flat_closed_form(a: float, theta, n: int) -> PlanarIsometry:
    """``A^n(z) x = z^(2^n - 1) x + n a z^(2^n)`` with exact rotation fractions."""
    theta = Fraction(theta) % 1
    q = theta.denominator
    top = Fraction(theta.numerator * pow(2, n, q) % q, q)
    c, s = _cos_sin(top)
    return PlanarIsometry((top - theta) % 1, (n * a * c, n * a * s))


# ------------------------------------------------------------- seeded batches

GAP_SHARDS = 4


def seed_symbols(base: BaseSystem, seed: int, count: int, length: int) -> np.ndarray:
    """One independent symbol string per orbit, from ``SeedSequence(seed).spawn(count)``."""
    children = np.random.SeedSequence(seed).spawn(count)
    return np.stack([base.sample_many(np.random.default_rng(c), 1, length)[0] for c in children])


def _gap_shard(args) -> GapReport:
    spec, symbols, checkpoints, stride, renorm = args
    return berger_wang_gap(spec, symbols, checkpoints, stride, renorm)


def gap_experiment(spec: CocycleSpec, seeds: int, checkpoints: Sequence[int], seed: int = 0, stride: int = 1,
                   workers: int = 1, shards: int = GAP_SHARDS, renorm: int = RENORM_EVERY) -> GapReport:
    """:func:`berger_wang_gap` over ``seeds`` random orbits, split into fixed shards."""
    checkpoints = sorted(int(c) for c in checkpoints)
    symbols = seed_symbols(spec.base, seed, seeds, checkpoints[-1])
    bounds = np.linspace(0, seeds, min(shards, seeds) + 1).astype(int)
    jobs = [(spec, symbols[bounds[i] : bounds[i + 1]], checkpoints, stride, renorm) for i in range(len(bounds) - 1)]
    if workers > 1 and len(jobs) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_gap_shard, jobs))
    else:
        parts = [_gap_shard(j) for j in jobs]
    return GapReport(
        checkpoints,
        np.concatenate([p.lam for p in parts]),
        np.concatenate([p.limsup for p in parts]),
        np.concatenate([p.gap for p in parts]),
        seeds,
        np.concatenate([p.excess for p in parts]),
    )


POSITIVE_PAIR = np.array([[[2.0, 1.0], [1.0, 1.0]], [[1.0, 1.0], [1.0, 2.0]]]) / np.array([1.0, 1.5])[:, None, None]


def default_spec() -> CocycleSpec:
    """Fair i.i.d. choice between two strictly positive 2x2 matrices."""
    return CocycleSpec(BaseSystem("bernoulli", (0.5, 0.5)), table=POSITIVE_PAIR.copy())
