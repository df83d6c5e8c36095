"""Finite level quotients pi_n(G) and the finite-level fractality checks.

Everything here certifies statements about the closure of G restricted to
finitely many levels.  A failed surjectivity test disproves a fractality
property; a pass is evidence up to the checked bound only.
"""
from __future__ import annotations

import hashlib
import itertools
import io
import logging
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence, Union

import numpy as np

from . import core
from .core import Portrait
from .engine import GroupPresentation, Word, generator_leaves
from .finite_type import FiniteTypeSpec

log = logging.getLogger(__name__)

Group = Union[GroupPresentation, FiniteTypeSpec]

DEFAULT_ELEMENT_LIMIT = 5_000_000
CACHE_MAGIC = b"TFQ1"
FINITE_LEVEL_NOTE = (
    "Verdicts concern the closure of G on finitely many levels: a failure "
    "disproves the property, a pass is evidence up to the checked bound only.")

PROPERTY_ALIASES = {
    "fractal": "fractal",
    "strongly_fractal": "strongly_fractal",
    "strongly-fractal": "strongly_fractal",
    "sf": "strongly_fractal",
    "super_strongly_fractal": "super_strongly_fractal",
    "super-strongly-fractal": "super_strongly_fractal",
    "ssf": "super_strongly_fractal",
}


class LimitExceeded(RuntimeError):
    """Enumeration stopped at ``element_limit``; ``partial`` elements were found."""

    def __init__(self, level: int, partial: int, limit: int):
        super().__init__(f"pi_{level} has more than {limit} elements (stopped after {partial})")
        self.level = level
        self.partial = partial
        self.limit = limit


def group_text(G: Group) -> str:
    return G.to_text() if isinstance(G, GroupPresentation) else G.canonical_text()


class LevelQuotient:
    """The enumerated finite group pi_n(G).

    Elements are rows of label ranks sorted lexicographically, which is the
    order of their canonical encodings.  For presented groups ``parent`` and
    ``via`` form a witness table: element i equals generator ``via[i]``
    times element ``parent[i]``.
    """

    def __init__(self, degree: int, level: int, codes: np.ndarray,
                 parent: np.ndarray | None = None, via: np.ndarray | None = None,
                 group_key: str = "", leaves: np.ndarray | None = None):
        self.degree = degree
        self.level = level
        self.codes = np.ascontiguousarray(codes)
        self.codes.setflags(write=False)
        self.parent = parent
        self.via = via
        self.group_key = group_key
        self._keys = core.as_void(self.codes) if self.codes.shape[1] else None
        self._leaves = leaves
        if leaves is not None:
            leaves.setflags(write=False)
        self._fixed: np.ndarray | None = None

    def __len__(self) -> int:
        return self.codes.shape[0]

    @property
    def order(self) -> int:
        return self.codes.shape[0]

    @property
    def identity_index(self) -> int:
        return 0  # the identity has all ranks 0 and sorts first

    def leaves(self) -> np.ndarray:
        if self._leaves is None:
            self._leaves = core.leaves_from_codes(self.degree, self.level, self.codes)
            self._leaves.setflags(write=False)
        return self._leaves

    def fixed_counts(self) -> np.ndarray:
        """X_n for every element."""
        if self._fixed is None:
            self._fixed = core.fixed_counts_from_leaves(self.leaves())
        return self._fixed

    def portrait(self, i: int) -> Portrait:
        labels = core.perm_table(self.degree)[self.codes[i].astype(np.int64)]
        return Portrait._trusted(self.degree, self.level, labels)

    def portraits(self) -> list[Portrait]:
        return [self.portrait(i) for i in range(self.order)]

    def encoding(self, i: int) -> bytes:
        return core.canonical_encode(self.portrait(i))

    def index_of_codes(self, codes: np.ndarray) -> np.ndarray:
        """Indices of code rows, -1 where absent."""
        codes = np.asarray(codes, dtype=self.codes.dtype)
        if self._keys is None:
            return np.zeros(codes.shape[0] if codes.ndim == 2 else 1, dtype=np.int64)
        codes = codes.reshape(-1, self.codes.shape[1])
        keys = core.as_void(codes)
        pos = np.searchsorted(self._keys, keys)
        pos_c = np.minimum(pos, self.order - 1)
        hit = self._keys[pos_c] == keys
        return np.where(hit, pos_c, -1)

    def index_of(self, p: Portrait) -> int:
        if p.degree != self.degree or p.depth != self.level:
            raise ValueError("portrait does not match quotient degree/level")
        row = core.perm_rank(p.labels).astype(self.codes.dtype)
        return int(self.index_of_codes(row[None, :])[0])

    def __contains__(self, p: Portrait) -> bool:
        return self.index_of(p) >= 0

    def witness_word(self, i: int) -> Word | None:
        if self.parent is None:
            return None
        letters = []
        while self.parent[i] >= 0:
            letters.append((int(self.via[i]), 1))
            i = int(self.parent[i])
        return tuple(letters)

    def truncation_codes(self, k: int) -> np.ndarray:
        return self.codes[:, :core.num_internal(self.degree, k)]


# -- enumeration ----------------------------------------------------------------

@dataclass
class _Closure:
    leaves: np.ndarray
    codes: np.ndarray
    parent: np.ndarray
    via: np.ndarray


class _KeySet:
    """Set of void row keys kept as sorted blocks merged like a binary counter.

    Each key carries an integer payload.  Inserting a batch costs time
    proportional to the batch plus amortised merges, so long searches with
    small frontiers stay cheap.
    """

    def __init__(self, keys: np.ndarray, values: np.ndarray):
        self.blocks: list[tuple[np.ndarray, np.ndarray]] = []
        self.add(keys, values)

    def lookup(self, keys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        found = np.zeros(keys.size, dtype=bool)
        values = np.full(keys.size, -1, dtype=np.int64)
        for bk, bv in self.blocks:
            pos = np.searchsorted(bk, keys)
            inside = pos < bk.size
            hit = np.zeros(keys.size, dtype=bool)
            hit[inside] = bk[pos[inside]] == keys[inside]
            found |= hit
            values[hit] = bv[pos[hit]]
        return found, values

    def add(self, keys: np.ndarray, values: np.ndarray) -> None:
        order = np.argsort(keys, kind="stable")
        self.blocks.append((keys[order], np.asarray(values, dtype=np.int64)[order]))
        while len(self.blocks) > 1 and self.blocks[-2][0].size <= 2 * self.blocks[-1][0].size:
            (k1, v1), (k2, v2) = self.blocks.pop(), self.blocks.pop()
            k, v = np.concatenate([k2, k1]), np.concatenate([v2, v1])
            order = np.argsort(k, kind="stable")
            self.blocks.append((k[order], v[order]))


def _codes_in_chunks(d: int, n: int, leaves: np.ndarray, threads: int = 1,
                     chunk: int = 1 << 16) -> np.ndarray:
    spans = [(i, min(i + chunk, leaves.shape[0])) for i in range(0, leaves.shape[0], chunk)]
    work = lambda span: core.codes_from_leaves(d, n, leaves[span[0]:span[1]])
    if threads > 1 and len(spans) > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(work, spans))
    else:
        parts = [work(sp) for sp in spans]
    return np.concatenate(parts) if parts else np.zeros((0, core.num_internal(d, n)), core.code_dtype(d))


def _bfs_closure(d: int, n: int, gens: Sequence[np.ndarray], limit: int,
                 threads: int = 1) -> _Closure:
    """Breadth-first closure of the identity under left multiplication by ``gens``.

    Elements are deduplicated on their leaf permutations, which determine
    the portrait; label codes are derived once at the end.
    """
    ldt = core.leaf_dtype(d, n)
    gens = [np.asarray(g).astype(ldt) for g in gens]
    ident = np.arange(d**n, dtype=ldt)[None, :]
    seen = _KeySet(core.as_void(ident).copy(), np.array([0]))
    leaf_parts = [ident]
    parent_parts = [np.array([-1], dtype=np.int64)]
    via_parts = [np.array([-1], dtype=np.int32)]
    frontier = ident
    frontier_ids = np.array([0], dtype=np.int64)
    total = 1
    while frontier.shape[0]:
        cand = np.concatenate([g[frontier] for g in gens])
        cparent = np.tile(frontier_ids, len(gens))
        cvia = np.repeat(np.arange(len(gens), dtype=np.int32), frontier.shape[0])
        keys = core.as_void(cand)
        ukeys, first = np.unique(keys, return_index=True)
        hit, _ = seen.lookup(ukeys)
        new = ~hit
        if not new.any():
            break
        # keep BFS discovery order stable: order new elements by first occurrence
        sel = np.sort(first[new])
        count = sel.size
        new_ids = np.arange(total, total + count, dtype=np.int64)
        seen.add(keys[sel], new_ids)
        total += count
        if total > limit:
            raise LimitExceeded(n, total, limit)
        frontier = cand[sel]
        leaf_parts.append(frontier)
        parent_parts.append(cparent[sel])
        via_parts.append(cvia[sel])
        frontier_ids = new_ids
    leaves = np.concatenate(leaf_parts)
    return _Closure(leaves, _codes_in_chunks(d, n, leaves, threads),
                    np.concatenate(parent_parts), np.concatenate(via_parts))


def _sorted_quotient(d: int, n: int, cl: _Closure, key: str) -> LevelQuotient:
    codes = cl.codes
    if codes.shape[1]:
        order = np.lexsort(codes.T[::-1])
    else:
        order = np.arange(codes.shape[0])
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    parent = cl.parent[order]
    parent = np.where(parent >= 0, rank[np.maximum(parent, 0)], -1)
    return LevelQuotient(d, n, codes[order], parent, cl.via[order], key, leaves=cl.leaves[order])


def _finite_type_codes(spec: FiniteTypeSpec, n: int, limit: int) -> np.ndarray:
    N = core.num_internal(spec.degree, n)
    cdt = core.code_dtype(spec.degree)
    if N == 0:
        return np.zeros((1, 0), dtype=cdt)
    if spec.quotient_order_exceeds(n, limit):
        raise LimitExceeded(n, limit + 1, limit)
    blocks = []
    for ranks in spec.class_ranks:
        s = ranks.size
        idx = np.arange(s**N, dtype=np.int64)
        cols = [(idx // s**(N - 1 - t)) % s for t in range(N)]
        blocks.append(ranks[np.stack(cols, axis=1)].astype(cdt))
    codes = np.concatenate(blocks)
    order = np.lexsort(codes.T[::-1].astype(np.int64))
    return codes[order]


def enumerate_quotient(G: Group, n: int, element_limit: int = DEFAULT_ELEMENT_LIMIT,
                       threads: int = 1, cache_dir: str | Path | None = None) -> LevelQuotient:
    """Enumerate pi_n(G) exactly, or raise :class:`LimitExceeded`."""
    if n < 0 or element_limit < 1:
        raise ValueError("need n >= 0 and element_limit >= 1")
    key = cache_key(G, n)
    if cache_dir is not None:
        path = Path(cache_dir) / f"{key}.tfq"
        if path.exists():
            try:
                Q = load_quotient(path)
                if Q.order <= element_limit:
                    Q.group_key = key
                    return Q
            except (OSError, ValueError) as exc:
                log.warning("ignoring unreadable cache file %s: %s", path, exc)
    d = G.degree
    if isinstance(G, FiniteTypeSpec):
        Q = LevelQuotient(d, n, _finite_type_codes(G, n, element_limit), group_key=key)
    else:
        gens = generator_leaves(G, n)
        Q = _sorted_quotient(d, n, _bfs_closure(d, n, gens, element_limit, threads), key)
    if cache_dir is not None:
        Path(cache_dir).mkdir(parents=True, exist_ok=True)
        save_quotient(Path(cache_dir) / f"{key}.tfq", Q)
    return Q


def cache_key(G: Group, n: int) -> str:
    return hashlib.sha256(f"{group_text(G)}\nlevel {n}\n".encode()).hexdigest()[:32]


def save_quotient(path: str | Path, Q: LevelQuotient) -> None:
    """Write the ``TFQ1`` container: header, sorted encodings, witness table, digest."""
    buf = io.BytesIO()
    has_witness = Q.parent is not None
    buf.write(CACHE_MAGIC)
    buf.write(struct.pack(">BHQB", Q.degree, Q.level, Q.order, int(has_witness)))
    buf.write(np.ascontiguousarray(Q.codes).tobytes())
    if has_witness:
        buf.write(Q.parent.astype(">i8").tobytes())
        buf.write(Q.via.astype(">i4").tobytes())
    payload = buf.getvalue()
    tmp = Path(str(path) + ".tmp")
    tmp.write_bytes(payload + hashlib.sha256(payload).digest())
    os.replace(tmp, path)


def load_quotient(path: str | Path) -> LevelQuotient:
    data = Path(path).read_bytes()
    if data[:4] != CACHE_MAGIC:
        raise ValueError("not a TFQ1 quotient file")
    payload, digest = data[:-32], data[-32:]
    if hashlib.sha256(payload).digest() != digest:
        raise ValueError("quotient file checksum mismatch")
    d, n, count, has_witness = struct.unpack(">BHQB", payload[4:16])
    N = core.num_internal(d, n)
    cdt = core.code_dtype(d)
    off = 16
    size = count * N * cdt.itemsize
    codes = np.frombuffer(payload[off:off + size], dtype=cdt).reshape(count, N).copy()
    off += size
    parent = via = None
    if has_witness:
        parent = np.frombuffer(payload[off:off + 8 * count], dtype=">i8").astype(np.int64)
        off += 8 * count
        via = np.frombuffer(payload[off:off + 4 * count], dtype=">i4").astype(np.int32)
        off += 4 * count
    if off != len(payload):
        raise ValueError("trailing bytes in quotient file")
    return LevelQuotient(d, n, codes, parent, via)


# -- subgroups, stabilizers, transitivity ----------------------------------------

def subgroup_closure(Q: LevelQuotient, seeds: Sequence[int] | np.ndarray) -> np.ndarray:
    """Sorted indices (into Q) of the subgroup generated by the seed elements."""
    seeds = np.asarray(seeds, dtype=np.int64).reshape(-1)
    if seeds.size == 0:
        return np.array([Q.identity_index])
    gens = Q.leaves()[seeds]
    cl = _bfs_closure(Q.degree, Q.level, list(gens), limit=Q.order)
    idx = Q.index_of_codes(cl.codes)
    if (idx < 0).any():
        raise ValueError("seed products left the quotient; seeds are not elements of Q")
    return np.sort(idx)


def level_stabilizer(Q: LevelQuotient, k: int) -> np.ndarray:
    """Indices of elements whose depth-k truncation is trivial."""
    if not 0 <= k <= Q.level:
        raise ValueError("need 0 <= k <= level")
    trunc = Q.truncation_codes(k)
    return np.flatnonzero(~trunc.any(axis=1))


@dataclass(frozen=True)
class TransitivityReport:
    transitive: bool
    orbit_sizes: tuple[int, ...]      # orbit of the first vertex at levels 1..n

    def __bool__(self) -> bool:
        return self.transitive


def _point_orbit(perms: Sequence[np.ndarray], size: int) -> np.ndarray:
    reached = np.zeros(size, dtype=bool)
    reached[0] = True
    frontier = np.array([0])
    while frontier.size:
        nxt = np.unique(np.concatenate([np.asarray(p)[frontier] for p in perms]))
        nxt = nxt[~reached[nxt]]
        reached[nxt] = True
        frontier = nxt
    return np.flatnonzero(reached)


def is_level_transitive(G: Group, n: int, element_limit: int = DEFAULT_ELEMENT_LIMIT) -> TransitivityReport:
    d = G.degree
    if isinstance(G, FiniteTypeSpec):
        # labels along the leftmost path are free within one class, so the
        # orbit of 1^k is the union over classes c of {tau(1) : tau in c}^k
        images = [frozenset(t[0] for t in cls) for cls in G.label_classes]
        meets = [(len(T), len(frozenset.intersection(*T)))
                 for r in range(1, len(images) + 1) for T in itertools.combinations(images, r)]
        sizes = tuple(sum((-1) ** (r + 1) * m**k for r, m in meets) for k in range(1, n + 1))
    else:
        orbit = _point_orbit(generator_leaves(G, n), d**n)
        sizes = tuple(int(np.unique(orbit // d**(n - k)).size) for k in range(1, n + 1))
    return TransitivityReport(all(s == d**k for k, s in enumerate(sizes, start=1)), sizes)


# -- stabilizer generators --------------------------------------------------------

def _stabilizer_batches(G: GroupPresentation, depth: int, key_fn, threads: int = 1,
                        limit: int = DEFAULT_ELEMENT_LIMIT) -> Iterator[np.ndarray]:
    """Yield batches of depth-``depth`` leaf permutations generating a stabilizer.

    Breadth-first search over coset keys (``key_fn`` maps leaf batches to
    row keys) keeps one representative lift per coset.  Each repeated key
    yields the Schreier generator ``rep^-1 * candidate``.
    """
    d = G.degree
    ldt = core.leaf_dtype(d, depth)
    gens = [g.astype(ldt) for g in generator_leaves(G, depth)]
    ident = np.arange(d**depth, dtype=ldt)[None, :]
    seen = _KeySet(core.as_void(key_fn(ident)).copy(), np.array([0]))
    reps = [ident]
    rep_count = 1
    frontier = ident
    while frontier.shape[0]:
        cand = np.concatenate([g[frontier] for g in gens])
        keys = core.as_void(key_fn(cand))
        ukeys, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
        hit, rep_idx = seen.lookup(ukeys)
        # representative of every candidate: an existing coset rep or first occurrence
        all_reps = np.concatenate(reps) if len(reps) > 1 else reps[0]
        rep_rows = np.empty((ukeys.size, d**depth), dtype=ldt)
        rep_rows[hit] = all_reps[rep_idx[hit]]
        rep_rows[~hit] = cand[first[~hit]]
        is_first = np.zeros(cand.shape[0], dtype=bool)
        is_first[first[~hit]] = True
        dup = ~is_first
        if dup.any():
            r = rep_rows[inverse.reshape(-1)[dup]]
            yield core.leaves_compose(core.leaves_inverse(r), cand[dup])
        new = ~hit
        if not new.any():
            break
        sel = np.sort(first[new])
        seen.add(keys[sel], rep_count + np.arange(sel.size))
        reps.append(cand[sel])
        rep_count += sel.size
        if rep_count > limit:
            raise LimitExceeded(depth, rep_count, limit)
        frontier = cand[sel]


def _level_key(d: int, depth: int, k: int):
    def key(leaves):
        trunc = core.leaves_truncate(d, depth, leaves, k)
        return np.ascontiguousarray(trunc)
    return key


def _vertex_key(d: int, depth: int, k: int, vidx: int):
    stride = d**(depth - k)

    def key(leaves):
        return np.ascontiguousarray((leaves[:, vidx * stride] // stride).astype(np.uint32)[:, None])
    return key


class _SubgroupAccumulator:
    """Grows a subgroup of a small quotient from incoming elements."""

    def __init__(self, d: int, m: int, target_order: int):
        self.d, self.m, self.target = d, m, target_order
        self.gens: list[np.ndarray] = []
        self.keys = core.as_void(np.zeros((1, max(core.num_internal(d, m), 1)), core.code_dtype(d)))
        self.size = 1

    @property
    def full(self) -> bool:
        return self.size >= self.target

    def add(self, leaves: np.ndarray) -> None:
        if self.full or leaves.shape[0] == 0 or self.m == 0:
            return
        codes = core.codes_from_leaves(self.d, self.m, leaves)
        keys, first = np.unique(core.as_void(codes), return_index=True)
        for key, i in zip(keys, first):
            if self.full:
                return
            pos = np.searchsorted(self.keys, key)
            if pos < self.keys.size and self.keys[pos] == key:
                continue
            self.gens.append(leaves[i])
            cl = _bfs_closure(self.d, self.m, self.gens, limit=max(self.target, 1) * 4)
            self.keys = np.sort(core.as_void(cl.codes))
            self.size = self.keys.size

    def contains_codes(self, codes: np.ndarray) -> np.ndarray:
        keys = core.as_void(codes)
        pos = np.minimum(np.searchsorted(self.keys, keys), self.keys.size - 1)
        return self.keys[pos] == keys


# -- fractality -----------------------------------------------------------------

@dataclass
class FractalityReport:
    property: str
    stab_levels: int
    target_level: int
    pairs: list[tuple[int, int]]
    verdicts: dict[tuple[int, tuple[int, ...]], str]
    overall: str                       # "pass_up_to_bound" or "fail_with_witness"
    witness: dict | None = None
    method: str = ""
    note: str = FINITE_LEVEL_NOTE

    @property
    def passed(self) -> bool:
        return self.overall == "pass_up_to_bound"

    def to_dict(self) -> dict:
        return {
            "property": self.property,
            "stab_levels": self.stab_levels,
            "target_level": self.target_level,
            "pairs": [list(p) for p in self.pairs],
            "verdicts": [
                {"level": k, "vertex": list(v), "verdict": s}
                for (k, v), s in sorted(self.verdicts.items())
            ],
            "overall": self.overall,
            "witness": self.witness,
            "method": self.method,
            "note": self.note,
        }


def _required_checks(prop: str, K: int) -> list[tuple[int, str]]:
    if prop == "strongly_fractal":
        return [(1, "level")]
    if prop == "super_strongly_fractal":
        return [(k, "level") for k in range(1, K + 1)]
    return [(k, "vertex") for k in range(1, K + 1)]


def _missing_witness(Pm: LevelQuotient, contains) -> dict:
    mask = contains(Pm.codes)
    i = int(np.flatnonzero(~mask)[0])
    w = Pm.witness_word(i)
    return {"missing_element": Pm.encoding(i).hex(), "missing_index": i,
            "missing_word": None if w is None else [list(x) for x in w]}


def check_fractality(G: Group, prop: str, K: int = 1, m: int = 1,
                     element_limit: int = DEFAULT_ELEMENT_LIMIT, method: str = "auto",
                     threads: int = 1) -> FractalityReport:
    """Test surjectivity of sections of stabilizers onto pi_m(G).

    ``prop`` is fractal (vertex stabilizers, levels 1..K), strongly_fractal
    (St(1)) or super_strongly_fractal (St(k), k = 1..K).  For every vertex v
    in the relevant level the image of the stabilizer under g -> g|_v,
    truncated to depth m, is compared with pi_m(G).
    """
    prop = PROPERTY_ALIASES.get(prop, prop)
    if prop not in ("fractal", "strongly_fractal", "super_strongly_fractal"):
        raise ValueError(f"unknown property {prop!r}")
    if K < 1 or m < 1:
        raise ValueError("K and m must be >= 1")
    if method == "auto":
        method = "schreier" if isinstance(G, GroupPresentation) else "enumerate"
    if method == "schreier" and not isinstance(G, GroupPresentation):
        raise ValueError("the schreier method needs a presented group")
    d = G.degree
    checks = _required_checks(prop, K)
    Pm = enumerate_quotient(G, m, element_limit)
    verdicts: dict[tuple[int, tuple[int, ...]], str] = {}
    witness = None
    pairs = [(k, m) for k, _ in checks]

    top = max(k for k, _ in checks)
    trans = is_level_transitive(G, top, element_limit)
    if not trans.transitive:
        bad = next(k for k, s in enumerate(trans.orbit_sizes, 1) if s != d**k)
        return FractalityReport(prop, K, m, pairs, verdicts, "fail_with_witness",
                                {"reason": "not_level_transitive", "level": bad,
                                 "orbit_size": trans.orbit_sizes[bad - 1]}, method)

    for k, kind in checks:
        depth = k + m
        vertices = range(d**k)
        if method == "enumerate":
            Q = enumerate_quotient(G, depth, element_limit)
            leaves = Q.leaves()
            for vi in vertices:
                if kind == "level":
                    stab = leaves[level_stabilizer(Q, k)]
                else:
                    stride = d**m
                    stab = leaves[leaves[:, vi * stride] // stride == vi]
                acc = core.codes_from_leaves(d, m, core.leaves_section(d, depth, stab, vi, k))
                image = np.unique(core.as_void(acc))
                contains = lambda codes, image=image: np.isin(core.as_void(codes), image)
                ok = image.size == Pm.order
                verdicts[(k, core.index_vertex(d, k, vi))] = "surjective" if ok else "not_surjective"
                if not ok and witness is None:
                    witness = {"level": k, "vertex": list(core.index_vertex(d, k, vi)),
                               "image_order": int(image.size), "target_order": Pm.order,
                               **_missing_witness(Pm, contains)}
        else:
            if kind == "level":
                accs = {vi: _SubgroupAccumulator(d, m, Pm.order) for vi in vertices}
                for batch in _stabilizer_batches(G, depth, _level_key(d, depth, k), threads, element_limit):
                    for vi, acc in accs.items():
                        acc.add(core.leaves_section(d, depth, batch, vi, k))
                    if all(a.full for a in accs.values()):
                        break
            else:
                accs = {}
                for vi in vertices:
                    acc = _SubgroupAccumulator(d, m, Pm.order)
                    for batch in _stabilizer_batches(G, depth, _vertex_key(d, depth, k, vi), threads, element_limit):
                        acc.add(core.leaves_section(d, depth, batch, vi, k))
                        if acc.full:
                            break
                    accs[vi] = acc
            for vi, acc in accs.items():
                v = core.index_vertex(d, k, vi)
                verdicts[(k, v)] = "surjective" if acc.full else "not_surjective"
                if not acc.full and witness is None:
                    witness = {"level": k, "vertex": list(v), "image_order": acc.size,
                               "target_order": Pm.order, **_missing_witness(Pm, acc.contains_codes)}
    overall = "fail_with_witness" if witness is not None else "pass_up_to_bound"
    return FractalityReport(prop, K, m, pairs, verdicts, overall, witness, method)


# -- martingale criterion -----------------------------------------------------------

@dataclass
class MartingaleReport:
    max_level: int
    levels: list[dict] = field(default_factory=list)   # {"level", "transitive_vertices", "vertices", "pass"}
    passed: bool = True
    witness: dict | None = None
    method: str = ""
    note: str = FINITE_LEVEL_NOTE

    def to_dict(self) -> dict:
        return {"max_level": self.max_level, "levels": self.levels, "passed": self.passed,
                "witness": self.witness, "method": self.method, "note": self.note}


def _orbit_size_of_zero(perms: set[tuple[int, ...]], d: int) -> int:
    return _point_orbit([np.array(p) for p in perms] or [np.arange(d)], d).size


def check_martingale_condition(G: Group, N: int, element_limit: int = DEFAULT_ELEMENT_LIMIT,
                               method: str = "auto", threads: int = 1) -> MartingaleReport:
    """For n = 1..N: does St(n-1) act transitively on the children of each v in L_{n-1}?"""
    if N < 1:
        raise ValueError("N must be >= 1")
    if method == "auto":
        method = "schreier" if isinstance(G, GroupPresentation) else "enumerate"
    d = G.degree
    report = MartingaleReport(N, method=method)
    for n in range(1, N + 1):
        k = n - 1
        nv = d**k
        label_sets: list[set[tuple[int, ...]]] = [set() for _ in range(nv)]
        if method == "enumerate":
            Q = enumerate_quotient(G, n, element_limit)
            stab = Q.leaves()[level_stabilizer(Q, k)].astype(np.int64)
            for vi in range(nv):
                block = stab[:, vi * d:(vi + 1) * d] - vi * d
                label_sets[vi] = {tuple(r) for r in np.unique(block, axis=0)}
            sizes = [_orbit_size_of_zero(s, d) for s in label_sets]
        else:
            if k == 0:
                gl = generator_leaves(G, 1)
                sizes = [_point_orbit(gl, d).size]
            else:
                sizes = [1] * nv
                for batch in _stabilizer_batches(G, n, _level_key(d, n, k), threads, element_limit):
                    b = batch.astype(np.int64)
                    for vi in range(nv):
                        if sizes[vi] == d:
                            continue
                        block = b[:, vi * d:(vi + 1) * d] - vi * d
                        label_sets[vi].update(tuple(r) for r in np.unique(block, axis=0))
                        sizes[vi] = _orbit_size_of_zero(label_sets[vi], d)
                    if all(s == d for s in sizes):
                        break
        ok = [s == d for s in sizes]
        entry = {"level": n, "vertices": nv, "transitive_vertices": int(sum(ok)), "pass": all(ok)}
        report.levels.append(entry)
        if not all(ok) and report.passed:
            vi = ok.index(False)
            report.passed = False
            report.witness = {"level": n, "vertex": list(core.index_vertex(d, k, vi)),
                              "orbit_size": int(sizes[vi])}
    return report
