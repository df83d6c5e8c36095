"""Fixed-point proportions and statistics of the fixed-point process X_n.

All quantities are computed on the finite quotients pi_n(G).  Since the
closure of G has the same quotients, the values are those of the closure
(which has the same fixed-point proportion as G).
"""
from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence, Union

import numpy as np

from . import core
from .core import Portrait
from .engine import GroupPresentation, generator_leaves
from .finite_type import FiniteTypeSpec
from .quotient import DEFAULT_ELEMENT_LIMIT, LevelQuotient, LimitExceeded, enumerate_quotient

Group = Union[GroupPresentation, FiniteTypeSpec]

CHUNK = 2048          # samples per RNG stream; fixed so results ignore the thread count


class FppError(ValueError):
    pass


# -- random streams ---------------------------------------------------------------

def chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    """Independent stream for sample chunk ``chunk`` of a run seeded with ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(chunk,))))


def _chunks(samples: int) -> list[tuple[int, int]]:
    return [(c, min(CHUNK, samples - c * CHUNK)) for c in range(math.ceil(samples / CHUNK))]


def _map_chunks(fn, samples: int, threads: int) -> list:
    jobs = _chunks(samples)
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(lambda job: fn(*job), jobs))
    return [fn(*job) for job in jobs]


def _walk_chunk(G: GroupPresentation, n: int, walk_length: int, seed: int,
                chunk: int, count: int) -> np.ndarray:
    rng = chunk_rng(seed, chunk)
    moves = np.stack(generator_leaves(G, n, inverses=True)).astype(np.intp)
    size = G.degree**n
    state = np.broadcast_to(np.arange(size, dtype=np.intp), (count, size)).copy()
    for _ in range(walk_length):
        move = rng.random(count) < 0.5
        pick = rng.integers(0, moves.shape[0], size=count)
        idx = np.flatnonzero(move)
        if idx.size:
            # left multiplication: apply the current element, then the generator
            state[idx] = moves[pick[idx][:, None], state[idx]]
    return state.astype(core.leaf_dtype(G.degree, n))


def lazy_walk_samples(G: GroupPresentation, n: int, samples: int, walk_length: int,
                      seed: int, threads: int = 1) -> np.ndarray:
    """Endpoints of independent lazy random walks on pi_n(G), as leaf permutations."""
    if samples < 1 or walk_length < 0:
        raise FppError("need samples >= 1 and walk_length >= 0")
    parts = _map_chunks(lambda c, k: _walk_chunk(G, n, walk_length, seed, c, k), samples, threads)
    return np.concatenate(parts)


def _direct_chunk(spec: FiniteTypeSpec, n: int, seed: int, chunk: int, count: int) -> np.ndarray:
    codes = spec.sample_codes(n, count, chunk_rng(seed, chunk))
    return core.leaves_from_codes(spec.degree, n, codes)


def haar_samples(spec: FiniteTypeSpec, n: int, samples: int, seed: int, threads: int = 1) -> np.ndarray:
    """Exactly Haar-distributed elements of pi_n of a finite-type group (leaf permutations)."""
    if samples < 1:
        raise FppError("need samples >= 1")
    return np.concatenate(_map_chunks(lambda c, k: _direct_chunk(spec, n, seed, c, k), samples, threads))


def sample_finite_type(spec: FiniteTypeSpec, n: int, seed: int) -> Portrait:
    codes = spec.sample_codes(n, 1, np.random.default_rng(seed))
    labels = core.perm_table(spec.degree)[codes[0].astype(np.int64)]
    return Portrait._trusted(spec.degree, n, labels)


def sample_leaves(G: Group, n: int, samples: int, seed: int, walk_length: int | None = None,
                  threads: int = 1) -> np.ndarray:
    if isinstance(G, FiniteTypeSpec):
        return haar_samples(G, n, samples, seed, threads)
    return lazy_walk_samples(G, n, samples, default_walk_length(n) if walk_length is None else walk_length,
                             seed, threads)


def default_walk_length(n: int) -> int:
    return max(16 * n, 1)


# -- exact and Monte Carlo FPP ------------------------------------------------------

def _quotient(G: Group, n: int, element_limit: int, threads: int = 1, cache_dir=None) -> LevelQuotient:
    return enumerate_quotient(G, n, element_limit, threads=threads, cache_dir=cache_dir)


def fpp_of_quotient(Q: LevelQuotient) -> Fraction:
    return Fraction(int(np.count_nonzero(Q.fixed_counts())), Q.order)


def fpp_exact(G: Group, n: int, element_limit: int = DEFAULT_ELEMENT_LIMIT, threads: int = 1,
              cache_dir=None) -> Fraction:
    """Proportion of pi_n(G) fixing at least one level-n vertex."""
    return fpp_of_quotient(_quotient(G, n, element_limit, threads, cache_dir))


@dataclass(frozen=True)
class MCEstimate:
    estimate: float
    stderr: float
    samples: int
    hits: int
    method: str

    def to_dict(self) -> dict:
        return {"estimate": self.estimate, "stderr": self.stderr, "samples": self.samples,
                "hits": self.hits, "method": self.method}


def _binomial(hits: int, samples: int, method: str) -> MCEstimate:
    p = hits / samples
    return MCEstimate(p, math.sqrt(p * (1 - p) / samples), samples, hits, method)


def fpp_mc(G: Group, n: int, samples: int, seed: int, walk_length: int | None = None,
           threads: int = 1) -> MCEstimate:
    """Monte Carlo FPP_n: lazy walk for presentations, direct Haar sampling for finite type."""
    if samples < 1:
        raise FppError("samples must be >= 1")
    size = G.degree**n
    ident = np.arange(size)

    if isinstance(G, FiniteTypeSpec):
        def job(c, k):
            return int(np.count_nonzero((_direct_chunk(G, n, seed, c, k) == ident).any(axis=1)))
        method = "haar_direct"
    else:
        wl = default_walk_length(n) if walk_length is None else walk_length
        if wl < 0:
            raise FppError("walk_length must be >= 0")

        def job(c, k):
            return int(np.count_nonzero((_walk_chunk(G, n, wl, seed, c, k) == ident).any(axis=1)))
        method = f"lazy_walk:{wl}"
    hits = sum(_map_chunks(job, samples, threads))
    return _binomial(hits, samples, method)


# -- finite-type recursion ------------------------------------------------------

@dataclass(frozen=True)
class Enclosure:
    """A rational value known exactly (lower == upper) or up to a certified interval."""
    lower: Fraction
    upper: Fraction

    @property
    def exact(self) -> bool:
        return self.lower == self.upper

    @property
    def value(self) -> Fraction:
        return self.lower if self.exact else (self.lower + self.upper) / 2

    def __float__(self) -> float:
        return float(self.value)

    def __contains__(self, x) -> bool:
        return self.lower <= x <= self.upper


def _round_down(x: Fraction, bits: int) -> Fraction:
    return Fraction(math.floor(x * (1 << bits)), 1 << bits)


def _round_up(x: Fraction, bits: int) -> Fraction:
    return Fraction(math.ceil(x * (1 << bits)), 1 << bits)


def _fix_profile(spec: FiniteTypeSpec) -> list[Counter]:
    return [Counter(core.perm_fixed_points(t) for t in cls) for cls in spec.label_classes]


def _step(q: Fraction, profile: Counter) -> Fraction:
    size = sum(profile.values())
    return sum((Fraction(c) * (1 - (1 - q) ** f) for f, c in profile.items()), Fraction(0)) / size


@dataclass
class RecursionResult:
    values: list[Enclosure]                  # p_1 .. p_N
    channels: list[list[Enclosure]]          # per label class, q_1 .. q_N
    exact_levels: int                        # values are exact up to this level

    def __getitem__(self, n: int) -> Enclosure:
        return self.values[n - 1]


def fpp_finite_type_recursion(spec: FiniteTypeSpec, N: int, exact_bits: int = 8192,
                              precision: int = 512) -> RecursionResult:
    """p_1..p_N for a finite-type group from the per-class recursion.

    Each channel evolves by q -> mean over tau in its class of 1 - (1-q)^fix(tau),
    starting at q_0 = 1; p_n averages the channels.  Exact rationals are kept
    while denominators stay below ``exact_bits``; after that the map, being
    increasing in q, is applied to interval endpoints rounded outward to
    multiples of 2^-precision, so every value is a certified enclosure.
    """
    if N < 1:
        raise FppError("N must be >= 1")
    profiles = _fix_profile(spec)
    k = len(profiles)
    channels: list[list[Enclosure]] = [[] for _ in range(k)]
    state = [(Fraction(1), Fraction(1)) for _ in range(k)]
    values: list[Enclosure] = []
    exact_levels = 0
    for n in range(1, N + 1):
        new = []
        for c, prof in enumerate(profiles):
            lo, hi = state[c]
            lo, hi = (_step(lo, prof), _step(hi, prof)) if lo != hi else (_step(lo, prof),) * 2
            if lo == hi and lo.denominator.bit_length() <= exact_bits:
                new.append((lo, hi))
            else:
                new.append((_round_down(lo, precision), _round_up(hi, precision)))
            channels[c].append(Enclosure(*new[-1]))
        state = new
        enc = Enclosure(sum(s[0] for s in state) / k, sum(s[1] for s in state) / k)
        if enc.exact and exact_levels == n - 1:
            exact_levels = n
        values.append(enc)
    return RecursionResult(values, channels, exact_levels)


# -- the fixed-point process -----------------------------------------------------

@dataclass
class XnHistogram:
    level: int
    counts: dict[int, int]
    total: int
    exact: bool

    def frequencies(self) -> dict[int, Fraction | float]:
        if self.exact:
            return {r: Fraction(c, self.total) for r, c in sorted(self.counts.items())}
        return {r: c / self.total for r, c in sorted(self.counts.items())}

    def to_dict(self) -> dict:
        return {"level": self.level, "total": self.total, "exact": self.exact,
                "counts": {str(r): c for r, c in sorted(self.counts.items())}}


def _histogram(values: np.ndarray) -> dict[int, int]:
    r, c = np.unique(values, return_counts=True)
    return {int(a): int(b) for a, b in zip(r, c)}


def level_fixed_counts(d: int, n: int, leaves: np.ndarray, k: int) -> np.ndarray:
    """X_k for each row of depth-n leaf permutations (k <= n)."""
    return core.fixed_counts_from_leaves(core.leaves_truncate(d, n, leaves, k))


def xn_distribution(G: Group, n: int, mode: str = "exact", samples: int = 10000,
                    seed: int | None = None, walk_length: int | None = None,
                    element_limit: int = DEFAULT_ELEMENT_LIMIT, threads: int = 1) -> XnHistogram:
    if mode == "exact":
        Q = _quotient(G, n, element_limit, threads)
        return XnHistogram(n, _histogram(Q.fixed_counts()), Q.order, True)
    if mode == "mc":
        if seed is None:
            raise FppError("mc mode needs a seed")
        leaves = sample_leaves(G, n, samples, seed, walk_length, threads)
        return XnHistogram(n, _histogram(core.fixed_counts_from_leaves(leaves)), samples, False)
    raise FppError(f"unknown mode {mode!r}")


def wilson_interval(hits: int, total: int, z: float = 1.96) -> tuple[float, float]:
    if total == 0:
        return (0.0, 1.0)
    p = hits / total
    den = 1 + z * z / total
    centre = (p + z * z / (2 * total)) / den
    half = z * math.sqrt(p * (1 - p) / total + z * z / (4 * total * total)) / den
    return (max(0.0, centre - half), min(1.0, centre + half))


def default_gap(d: int, r: int) -> int:
    """m = ceil(log_d r) + 1, computed in integers."""
    m, power = 0, 1
    while power < r:
        power *= d
        m += 1
    return m + 1


@dataclass
class ConditionalResult:
    n: int
    m: int
    r: int
    value: Fraction | float
    numerator: int
    denominator: int
    bound: Fraction
    exact: bool
    stderr: float = 0.0
    wilson: tuple[float, float] | None = None

    @property
    def within_bound(self) -> bool:
        if self.exact:
            return self.value <= self.bound
        return self.value <= self.bound + 3 * self.stderr

    def to_dict(self) -> dict:
        return {"n": self.n, "m": self.m, "r": self.r, "exact": self.exact,
                "value": str(self.value) if self.exact else self.value,
                "numerator": self.numerator, "denominator": self.denominator,
                "bound": str(self.bound), "stderr": self.stderr,
                "wilson": list(self.wilson) if self.wilson else None,
                "within_bound": self.within_bound}


def conditional_fixation(G: Group, n: int, r: int, m: int | None = None, mode: str = "exact",
                         samples: int = 50000, seed: int | None = None,
                         walk_length: int | None = None,
                         element_limit: int = DEFAULT_ELEMENT_LIMIT, threads: int = 1) -> ConditionalResult:
    """mu(X_{n+m} = r | X_n = r), compared with 1 - 1/|pi_m(G)|."""
    d = G.degree
    if m is None:
        m = default_gap(d, r)
    if n < 1 or m < 1 or r < 0:
        raise FppError("need n, m >= 1 and r >= 0")
    bound = 1 - Fraction(1, enumerate_quotient(G, m, element_limit).order)
    if mode == "exact":
        leaves = _quotient(G, n + m, element_limit, threads).leaves()
    elif mode == "mc":
        if seed is None:
            raise FppError("mc mode needs a seed")
        leaves = sample_leaves(G, n + m, samples, seed, walk_length, threads)
    else:
        raise FppError(f"unknown mode {mode!r}")
    xn = level_fixed_counts(d, n + m, leaves, n)
    xnm = core.fixed_counts_from_leaves(leaves)
    cond = xn == r
    den = int(np.count_nonzero(cond))
    if den == 0:
        raise FppError(f"no mass at X_{n} = {r}")
    num = int(np.count_nonzero(cond & (xnm == r)))
    if mode == "exact":
        return ConditionalResult(n, m, r, Fraction(num, den), num, den, bound, True)
    p = num / den
    return ConditionalResult(n, m, r, p, num, den, bound, False,
                             math.sqrt(p * (1 - p) / den), wilson_interval(num, den))


# -- cylinder independence ----------------------------------------------------------

@dataclass
class IndependenceResult:
    lhs: Fraction
    rhs: Fraction

    @property
    def equal(self) -> bool:
        return self.lhs == self.rhs

    def to_dict(self) -> dict:
        return {"lhs": str(self.lhs), "rhs": str(self.rhs), "equal": self.equal}


PatternSet = Union[Iterable[Portrait], np.ndarray]


def _pattern_codes(patterns: PatternSet, d: int, k: int) -> np.ndarray:
    if isinstance(patterns, np.ndarray):
        return patterns
    rows = []
    for p in patterns:
        if p.degree != d or p.depth != k:
            raise FppError(f"pattern has shape (d={p.degree}, n={p.depth}), expected (d={d}, n={k})")
        rows.append(core.perm_rank(p.labels))
    return np.array(rows, dtype=core.code_dtype(d)).reshape(len(rows), core.num_internal(d, k))


def cylinder_independence_check(G: Group, n: int, m: int, v: Sequence[int], A: PatternSet,
                                B: PatternSet, element_limit: int = DEFAULT_ELEMENT_LIMIT) -> IndependenceResult:
    """Compare mu(C_A and g|_v in C_B) with mu(C_A) mu(C_B), exactly."""
    d = G.degree
    if len(v) != n:
        raise FppError("v must be a level-n vertex")
    vi = core.vertex_index(d, v)
    Qn = enumerate_quotient(G, n, element_limit)
    Qm = enumerate_quotient(G, m, element_limit)
    Qnm = enumerate_quotient(G, n + m, element_limit)
    a = np.unique(core.as_void(_pattern_codes(A, d, n)))
    b = np.unique(core.as_void(_pattern_codes(B, d, m)))
    top = core.as_void(np.ascontiguousarray(Qnm.truncation_codes(n)))
    sec = core.codes_from_leaves(d, m, core.leaves_section(d, n + m, Qnm.leaves(), vi, n))
    in_a = np.isin(top, a) if a.size else np.zeros(Qnm.order, dtype=bool)
    in_b = np.isin(core.as_void(sec), b) if b.size else np.zeros(Qnm.order, dtype=bool)
    lhs = Fraction(int(np.count_nonzero(in_a & in_b)), Qnm.order)
    count_a = int(np.count_nonzero(Qn.index_of_codes(_pattern_codes(A, d, n)) >= 0)) if a.size else 0
    count_b = int(np.count_nonzero(Qm.index_of_codes(_pattern_codes(B, d, m)) >= 0)) if b.size else 0
    rhs = Fraction(count_a, Qn.order) * Fraction(count_b, Qm.order)
    return IndependenceResult(lhs, rhs)


# -- series ---------------------------------------------------------------------

@dataclass
class FppEntry:
    level: int
    provenance: str                      # "exact", "recursion", "mc"
    exact: Fraction | None = None
    lower: Fraction | None = None
    upper: Fraction | None = None
    mc: MCEstimate | None = None
    quotient_order: int | None = None

    @property
    def value(self) -> float:
        if self.exact is not None:
            return float(self.exact)
        if self.lower is not None:
            return float((self.lower + self.upper) / 2)
        return self.mc.estimate

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "provenance": self.provenance,
            "exact": None if self.exact is None else str(self.exact),
            "lower": None if self.lower is None else str(self.lower),
            "upper": None if self.upper is None else str(self.upper),
            "mc": None if self.mc is None else self.mc.to_dict(),
            "quotient_order": self.quotient_order,
        }


@dataclass
class FppSeries:
    group: str
    mode: str
    entries: list[FppEntry] = field(default_factory=list)

    def exact_values(self) -> list[Fraction]:
        return [e.exact for e in self.entries if e.exact is not None]

    def non_increasing(self) -> bool:
        """Checks consecutive levels that carry exact values or certified enclosures."""
        for a, b in zip(self.entries, self.entries[1:]):
            if b.level != a.level + 1:
                continue
            hi_b = b.exact if b.exact is not None else b.upper
            lo_a = a.exact if a.exact is not None else a.lower
            if hi_b is not None and lo_a is not None and hi_b > lo_a:
                return False
        return True

    def to_dict(self) -> dict:
        return {"group": self.group, "mode": self.mode,
                "non_increasing": self.non_increasing(),
                "entries": [e.to_dict() for e in self.entries]}


def fpp_report(G: Group, max_level: int, mode: str = "auto", samples: int = 50000,
               seed: int | None = None, walk_length: int | None = None,
               element_limit: int = DEFAULT_ELEMENT_LIMIT, threads: int = 1,
               cache_dir=None, group_name: str = "", min_level: int = 1) -> FppSeries:
    """FPP_n for n = min_level..max_level.

    ``auto`` computes exact values while pi_n(G) fits under ``element_limit``,
    then uses the recursion for finite-type groups and Monte Carlo otherwise.
    """
    if mode not in ("auto", "exact", "mc", "recursion"):
        raise FppError(f"unknown mode {mode!r}")
    if max_level < min_level or min_level < 1:
        raise FppError("need 1 <= min_level <= max_level")
    finite = isinstance(G, FiniteTypeSpec)
    if mode == "recursion" and not finite:
        raise FppError("recursion mode applies to finite-type groups only")
    series = FppSeries(group_name or getattr(G, "name", ""), mode)
    rec = None
    exact_ok = mode in ("auto", "exact")
    for n in range(min_level, max_level + 1):
        if exact_ok:
            if finite and G.quotient_order_exceeds(n, element_limit):
                if mode == "exact":
                    raise LimitExceeded(n, element_limit + 1, element_limit)
                exact_ok = False
            else:
                try:
                    Q = _quotient(G, n, element_limit, threads, cache_dir)
                except LimitExceeded:
                    if mode == "exact":
                        raise
                    exact_ok = False
                else:
                    series.entries.append(FppEntry(n, "exact", exact=fpp_of_quotient(Q),
                                                   quotient_order=Q.order))
                    continue
        if finite and mode in ("auto", "recursion"):
            if rec is None:
                rec = fpp_finite_type_recursion(G, max_level)
            enc = rec[n]
            if enc.exact:
                series.entries.append(FppEntry(n, "recursion", exact=enc.lower))
            else:
                series.entries.append(FppEntry(n, "recursion", lower=enc.lower, upper=enc.upper))
            continue
        if seed is None:
            raise FppError("Monte Carlo levels need a seed")
        series.entries.append(FppEntry(n, "mc", mc=fpp_mc(G, n, samples, seed, walk_length, threads)))
    return series
