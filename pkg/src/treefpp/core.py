"""Truncated automorphisms of the d-regular rooted tree.

A depth-n portrait stores one permutation label per vertex of depth < n.
Vertices are words over the letters 1..d; inside arrays a level-k vertex is
the integer whose base-d digits (most significant first) are ``letter - 1``,
and its label sits at breadth-first position ``(d**k - 1) // (d - 1) + i``.
Labels are stored 0-based: ``labels[j, x] = y`` means the label at vertex j
sends child letter ``x + 1`` to ``y + 1``.

Products follow the left-action convention: ``compose(p, q)`` applies ``q``
first, so ``label_pq(v) = label_p(q(v)) o label_q(v)``.
"""
from __future__ import annotations

import itertools
import math
import re
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

MAX_DEGREE = 8
ENCODING_MAGIC = b"TP"
ENCODING_VERSION = 1

Perm = tuple[int, ...]
Vertex = tuple[int, ...]


class PortraitError(ValueError):
    """Raised on malformed portraits, vertices or encodings."""


def check_degree(d: int) -> int:
    if not isinstance(d, (int, np.integer)) or not 2 <= d <= MAX_DEGREE:
        raise PortraitError(f"degree must be an integer in [2, {MAX_DEGREE}], got {d!r}")
    return int(d)


def num_internal(d: int, n: int) -> int:
    """Number of labels of a depth-n portrait."""
    return (d**n - 1) // (d - 1)


def level_offset(d: int, k: int) -> int:
    return (d**k - 1) // (d - 1)


def vertex_index(d: int, v: Sequence[int]) -> int:
    """Position of vertex ``v`` (1-based letters) inside its level."""
    i = 0
    for x in v:
        if not 1 <= x <= d:
            raise PortraitError(f"letter {x} outside 1..{d}")
        i = i * d + (x - 1)
    return i


def index_vertex(d: int, k: int, i: int) -> Vertex:
    letters = []
    for _ in range(k):
        i, r = divmod(i, d)
        letters.append(r + 1)
    return tuple(reversed(letters))


def level_vertices(d: int, k: int) -> list[Vertex]:
    return [tuple(x + 1 for x in w) for w in itertools.product(range(d), repeat=k)]


# -- permutations -----------------------------------------------------------

@lru_cache(maxsize=None)
def perm_table(d: int) -> np.ndarray:
    """All permutations of 0..d-1 in lexicographic order, shape (d!, d)."""
    return np.array(list(itertools.permutations(range(d))), dtype=np.int16).reshape(-1, d)


def code_dtype(d: int) -> np.dtype:
    return np.dtype(np.uint8) if math.factorial(d) <= 256 else np.dtype(">u2")


def perm_rank(perms: np.ndarray) -> np.ndarray:
    """Lexicographic rank (Lehmer code) of permutations along the last axis."""
    perms = np.asarray(perms)
    d = perms.shape[-1]
    rank = np.zeros(perms.shape[:-1], dtype=np.int64)
    for x in range(d):
        smaller_later = (perms[..., x + 1:] < perms[..., x, None]).sum(axis=-1)
        rank += smaller_later * math.factorial(d - 1 - x)
    return rank


def perm_compose(p: Perm, q: Perm) -> Perm:
    """Apply ``q`` first, then ``p``."""
    return tuple(p[q[x]] for x in range(len(q)))


def perm_inverse(p: Perm) -> Perm:
    inv = [0] * len(p)
    for x, y in enumerate(p):
        inv[y] = x
    return tuple(inv)


def perm_identity(d: int) -> Perm:
    return tuple(range(d))


def perm_fixed_points(p: Perm) -> int:
    return sum(1 for x, y in enumerate(p) if x == y)


_CYCLE_RE = re.compile(r"\(([^()]*)\)")


def parse_cycles(text: str, d: int) -> Perm:
    """Parse 1-based cycle notation such as ``(1 2)(3 4 5)`` or ``()``."""
    text = text.strip()
    if not text:
        raise PortraitError("empty permutation")
    pos = 0
    images = list(range(d))
    seen: set[int] = set()
    for m in _CYCLE_RE.finditer(text):
        if text[pos:m.start()].strip():
            raise PortraitError(f"unexpected text {text[pos:m.start()]!r} in permutation")
        pos = m.end()
        body = m.group(1).replace(",", " ").split()
        try:
            cyc = [int(t) for t in body]
        except ValueError as exc:
            raise PortraitError(f"non-integer point in cycle {m.group(0)!r}") from exc
        for x in cyc:
            if not 1 <= x <= d:
                raise PortraitError(f"point {x} outside 1..{d}")
            if x in seen:
                raise PortraitError(f"point {x} repeated in permutation")
            seen.add(x)
        for a, b in zip(cyc, cyc[1:] + cyc[:1]):
            images[a - 1] = b - 1
    if text[pos:].strip() or pos == 0:
        raise PortraitError(f"cannot parse permutation {text!r}")
    return tuple(images)


def format_cycles(p: Perm) -> str:
    seen = set()
    out = []
    for start in range(len(p)):
        if start in seen or p[start] == start:
            continue
        cyc = [start]
        seen.add(start)
        x = p[start]
        while x != start:
            cyc.append(x)
            seen.add(x)
            x = p[x]
        out.append("(" + " ".join(str(c + 1) for c in cyc) + ")")
    return "".join(out) or "()"


# -- portraits --------------------------------------------------------------

class Portrait:
    """Immutable depth-n portrait over the d-regular tree."""

    __slots__ = ("degree", "depth", "labels", "_key")

    def __init__(self, degree: int, depth: int, labels) -> None:
        d = check_degree(degree)
        if depth < 0:
            raise PortraitError("depth must be >= 0")
        arr = np.array(labels, dtype=np.int16).reshape(-1, d) if num_internal(d, depth) else np.zeros((0, d), np.int16)
        if arr.shape != (num_internal(d, depth), d):
            raise PortraitError(
                f"expected {num_internal(d, depth)} labels for d={d}, n={depth}, got {arr.shape[0]}")
        if arr.size and not np.array_equal(np.sort(arr, axis=1), np.broadcast_to(np.arange(d), arr.shape)):
            raise PortraitError("every label must be a permutation of 0..d-1")
        arr.setflags(write=False)
        self.degree = d
        self.depth = int(depth)
        self.labels = arr
        self._key = None

    @classmethod
    def _trusted(cls, d: int, n: int, labels: np.ndarray) -> "Portrait":
        obj = cls.__new__(cls)
        labels = np.ascontiguousarray(labels, dtype=np.int16)
        labels.setflags(write=False)
        obj.degree, obj.depth, obj.labels, obj._key = d, n, labels, None
        return obj

    def _hash_key(self):
        if self._key is None:
            self._key = (self.degree, self.depth, self.labels.tobytes())
        return self._key

    def __eq__(self, other) -> bool:
        return isinstance(other, Portrait) and self._hash_key() == other._hash_key()

    def __hash__(self) -> int:
        return hash(self._hash_key())

    def __repr__(self) -> str:
        shown = " ".join(format_cycles(tuple(row)) for row in self.labels[:7])
        more = " ..." if len(self.labels) > 7 else ""
        return f"Portrait(d={self.degree}, n={self.depth}, labels=[{shown}{more}])"

    def label(self, v: Sequence[int]) -> Perm:
        k = len(v)
        if k >= self.depth:
            raise PortraitError("vertex has no label at this depth")
        return tuple(int(y) for y in self.labels[level_offset(self.degree, k) + vertex_index(self.degree, v)])

    def level_labels(self, k: int) -> np.ndarray:
        off = level_offset(self.degree, k)
        return self.labels[off:off + self.degree**k]

    def __mul__(self, other: "Portrait") -> "Portrait":
        return compose(self, other)


def identity_portrait(d: int, n: int) -> Portrait:
    d = check_degree(d)
    if n < 0:
        raise PortraitError("depth must be >= 0")
    return Portrait._trusted(d, n, np.tile(np.arange(d, dtype=np.int16), (num_internal(d, n), 1)))


def random_portrait(d: int, n: int, rng: np.random.Generator) -> Portrait:
    labels = perm_table(d)[rng.integers(0, math.factorial(d), size=num_internal(d, n))]
    return Portrait._trusted(d, n, labels)


def level_images(p: Portrait) -> list[np.ndarray]:
    """``imgs[k][i]`` is the index of the image of level-k vertex ``i``."""
    d = p.degree
    imgs = [np.zeros(1, dtype=np.int64)]
    for k in range(p.depth):
        imgs.append((imgs[k][:, None] * d + p.level_labels(k)).reshape(-1))
    return imgs


def apply(p: Portrait, v: Sequence[int]) -> Vertex:
    """Image of vertex ``v`` under ``p``."""
    v = tuple(v)
    if len(v) > p.depth:
        raise PortraitError(f"vertex of length {len(v)} deeper than portrait depth {p.depth}")
    d = p.degree
    out = []
    i = 0  # index of the image of the current prefix
    j = 0  # index of the current prefix
    for k, x in enumerate(v):
        if not 1 <= x <= d:
            raise PortraitError(f"letter {x} outside 1..{d}")
        y = int(p.labels[level_offset(d, k) + j, x - 1])
        out.append(y + 1)
        i = i * d + y
        j = j * d + (x - 1)
    return tuple(out)


def _check_pair(p: Portrait, q: Portrait) -> None:
    if p.degree != q.degree or p.depth != q.depth:
        raise PortraitError(
            f"portrait mismatch: (d={p.degree}, n={p.depth}) vs (d={q.degree}, n={q.depth})")


def compose(p: Portrait, q: Portrait) -> Portrait:
    """The product p*q: apply ``q``, then ``p``."""
    _check_pair(p, q)
    d, n = p.degree, p.depth
    qimg = level_images(q)
    out = np.empty_like(p.labels)
    for k in range(n):
        off = level_offset(d, k)
        pk, qk = p.level_labels(k), q.level_labels(k)
        out[off:off + d**k] = pk[qimg[k][:, None], qk]
    return Portrait._trusted(d, n, out)


def invert(p: Portrait) -> Portrait:
    d, n = p.degree, p.depth
    pimg = level_images(p)
    out = np.empty_like(p.labels)
    ident = np.arange(d, dtype=np.int16)
    for k in range(n):
        off = level_offset(d, k)
        pk = p.level_labels(k)
        block = np.empty_like(pk)
        block[pimg[k][:, None], pk] = ident[None, :]
        out[off:off + d**k] = block
    return Portrait._trusted(d, n, out)


def truncate(p: Portrait, k: int) -> Portrait:
    if not 0 <= k <= p.depth:
        raise PortraitError(f"cannot truncate depth {p.depth} portrait to {k}")
    return Portrait._trusted(p.degree, k, p.labels[:num_internal(p.degree, k)])


def section(p: Portrait, v: Sequence[int]) -> Portrait:
    """Portrait of depth ``depth - |v|`` induced below vertex ``v``."""
    v = tuple(v)
    d, n = p.degree, p.depth
    if len(v) > n:
        raise PortraitError(f"vertex of length {len(v)} too deep for depth {n}")
    i = vertex_index(d, v)
    m = n - len(v)
    blocks = []
    for j in range(m):
        off = level_offset(d, len(v) + j)
        blocks.append(p.labels[off + i * d**j: off + (i + 1) * d**j])
    labels = np.concatenate(blocks) if blocks else np.zeros((0, d), np.int16)
    return Portrait._trusted(d, m, labels)


def fixed_leaves(p: Portrait) -> int:
    imgs = level_images(p)[-1]
    return int(np.count_nonzero(imgs == np.arange(imgs.size)))


def is_identity(p: Portrait) -> bool:
    return bool(np.array_equal(p.labels, np.broadcast_to(np.arange(p.degree), p.labels.shape)))


def leaf_permutation(p: Portrait) -> np.ndarray:
    return level_images(p)[-1]


def from_leaf_permutation(d: int, n: int, leaves) -> Portrait:
    leaves = np.asarray(leaves, dtype=np.int64)
    if leaves.shape != (d**n,) or not np.array_equal(np.sort(leaves), np.arange(d**n)):
        raise PortraitError("not a permutation of the leaves")
    labels = labels_from_leaves(d, n, leaves[None, :])[0]
    if n and not np.array_equal(np.sort(labels, axis=1), np.broadcast_to(np.arange(d), labels.shape)):
        raise PortraitError("leaf permutation does not preserve the tree structure")
    p = Portrait._trusted(d, n, labels)
    if not np.array_equal(leaf_permutation(p), leaves):
        raise PortraitError("leaf permutation does not preserve the tree structure")
    return p


# -- canonical encoding -----------------------------------------------------

def canonical_encode(p: Portrait) -> bytes:
    """Versioned, injective byte encoding: header then one rank per label."""
    head = ENCODING_MAGIC + bytes([ENCODING_VERSION, p.degree]) + p.depth.to_bytes(2, "big")
    return head + perm_rank(p.labels).astype(code_dtype(p.degree)).tobytes()


def canonical_decode(data: bytes) -> Portrait:
    if len(data) < 6 or data[:2] != ENCODING_MAGIC:
        raise PortraitError("bad portrait encoding header")
    if data[2] != ENCODING_VERSION:
        raise PortraitError(f"unsupported portrait encoding version {data[2]}")
    d = check_degree(data[3])
    n = int.from_bytes(data[4:6], "big")
    dt = code_dtype(d)
    body = data[6:]
    if len(body) != num_internal(d, n) * dt.itemsize:
        raise PortraitError("portrait encoding has wrong length")
    ranks = np.frombuffer(body, dtype=dt).astype(np.int64)
    if ranks.size and ranks.max() >= math.factorial(d):
        raise PortraitError("label rank out of range")
    return Portrait._trusted(d, n, perm_table(d)[ranks])


# -- batch operations on leaf permutations ----------------------------------
# Quotient enumeration and sampling work on arrays of shape (count, d**n)
# holding leaf permutations; these helpers convert to and from label ranks.

def leaf_dtype(d: int, n: int) -> np.dtype:
    size = d**n
    if size <= 1 << 8:
        return np.dtype(np.uint8)
    if size <= 1 << 16:
        return np.dtype(np.uint16)
    return np.dtype(np.uint32)


def labels_from_leaves(d: int, n: int, leaves: np.ndarray) -> np.ndarray:
    """Labels (count, num_internal, d) of a batch of leaf permutations."""
    leaves = np.asarray(leaves).astype(np.int64, copy=False)
    count = leaves.shape[0]
    out = np.empty((count, num_internal(d, n), d), dtype=np.int16)
    prev = np.zeros((count, 1), dtype=np.int64)
    for k in range(n):
        stride = d**(n - k - 1)
        img = leaves[:, ::stride] // stride  # images of level k+1 vertices
        off = level_offset(d, k)
        out[:, off:off + d**k, :] = (img.reshape(count, d**k, d) - prev[:, :, None] * d)
        prev = img
    return out


def codes_from_leaves(d: int, n: int, leaves: np.ndarray) -> np.ndarray:
    """Label-rank rows (count, num_internal) in the canonical byte dtype."""
    return perm_rank(labels_from_leaves(d, n, leaves)).astype(code_dtype(d))


def leaves_from_codes(d: int, n: int, codes: np.ndarray) -> np.ndarray:
    codes = np.asarray(codes).astype(np.int64)
    count = codes.shape[0]
    labels = perm_table(d)[codes]  # (count, N, d)
    img = np.zeros((count, 1), dtype=np.int64)
    for k in range(n):
        off = level_offset(d, k)
        img = (img[:, :, None] * d + labels[:, off:off + d**k, :]).reshape(count, -1)
    return img.astype(leaf_dtype(d, n))


def leaves_inverse(leaves: np.ndarray) -> np.ndarray:
    leaves = np.asarray(leaves)
    inv = np.empty_like(leaves)
    rows = np.arange(leaves.shape[0])[:, None]
    inv[rows, leaves] = np.arange(leaves.shape[1], dtype=leaves.dtype)[None, :]
    return inv


def leaves_compose(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Row-wise product: apply ``q`` first, then ``p``; shapes broadcast on axis 0."""
    p = np.asarray(p)
    q = np.asarray(q)
    if p.ndim == 1:
        return p[q]
    if q.ndim == 1:
        q = np.broadcast_to(q, p.shape)
    return np.take_along_axis(p, q.astype(np.intp), axis=1)


def leaves_truncate(d: int, n: int, leaves: np.ndarray, k: int) -> np.ndarray:
    stride = d**(n - k)
    return (np.asarray(leaves)[:, ::stride] // stride).astype(leaf_dtype(d, k))


def leaves_section(d: int, n: int, leaves: np.ndarray, vertex_idx: int, k: int) -> np.ndarray:
    """Depth n-k sections at the level-k vertex with index ``vertex_idx``."""
    width = d**(n - k)
    block = np.asarray(leaves)[:, vertex_idx * width:(vertex_idx + 1) * width].astype(np.int64)
    base = (block[:, :1] // width) * width  # first leaf below the image vertex
    return (block - base).astype(leaf_dtype(d, n - k))


def fixed_counts_from_leaves(leaves: np.ndarray) -> np.ndarray:
    leaves = np.asarray(leaves)
    return np.count_nonzero(leaves == np.arange(leaves.shape[1], dtype=leaves.dtype), axis=1)


def as_void(rows: np.ndarray) -> np.ndarray:
    """View each row as one opaque key; byte order of the dtype is kept."""
    rows = np.ascontiguousarray(rows)
    return rows.view(np.dtype((np.void, rows.dtype.itemsize * rows.shape[1]))).ravel()


def portraits_to_leaves(portraits: Iterable[Portrait]) -> np.ndarray:
    return np.array([leaf_permutation(p) for p in portraits])
