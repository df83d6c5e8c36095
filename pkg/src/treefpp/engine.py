"""Self-similar groups given by wreath recursions.

A presentation lists, for each generator, ``d`` section words and a root
permutation.  Words are tuples of ``(generator index, sign)`` pairs read as a
product in the left-action convention of :mod:`treefpp.core`: the word
``g h`` acts by ``h`` first.
"""
from __future__ import annotations

import enum
import re
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from . import core
from .core import Perm, Portrait

Letter = tuple[int, int]
Word = tuple[Letter, ...]

_NAME_RE = re.compile(r"[A-Za-z][A-Za-z0-9_]*\Z")


class PresentationError(ValueError):
    """Syntax or validation error in a presentation, with position."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        where = f"line {line}, column {column}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line
        self.column = column


@dataclass(frozen=True)
class GeneratorRecursion:
    name: str
    sections: tuple[Word, ...]
    root: Perm


@dataclass(frozen=True)
class GroupPresentation:
    degree: int
    generators: tuple[GeneratorRecursion, ...]
    name: str = ""
    provenance: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        core.check_degree(self.degree)
        names = [g.name for g in self.generators]
        if len(set(names)) != len(names):
            raise PresentationError("duplicate generator names")
        for g in self.generators:
            if len(g.sections) != self.degree or len(g.root) != self.degree:
                raise PresentationError(f"generator {g.name}: expected {self.degree} sections")
            if sorted(g.root) != list(range(self.degree)):
                raise PresentationError(f"generator {g.name}: root is not a permutation")
            for w in g.sections:
                for i, s in w:
                    if not 0 <= i < len(self.generators) or s not in (1, -1):
                        raise PresentationError(f"generator {g.name}: bad section letter")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(g.name for g in self.generators)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise PresentationError(f"undeclared generator {name!r}") from None

    def to_text(self) -> str:
        """Print in the DSL; ``parse_presentation(G.to_text()) == G``."""
        lines = [f"degree {self.degree}"]
        for g in self.generators:
            secs = ", ".join(format_word(self, w) for w in g.sections)
            lines.append(f"gen {g.name} = ({secs}) {core.format_cycles(g.root)}")
        return "\n".join(lines) + "\n"

    def word(self, text: str) -> Word:
        return parse_word(self, text)


# -- words ------------------------------------------------------------------

def reduce_word(w: Sequence[Letter]) -> Word:
    out: list[Letter] = []
    for i, s in w:
        if out and out[-1] == (i, -s):
            out.pop()
        else:
            out.append((i, s))
    return tuple(out)


def invert_word(w: Word) -> Word:
    return tuple((i, -s) for i, s in reversed(w))


def multiply_words(*words: Word) -> Word:
    return reduce_word([x for w in words for x in w])


def power_word(w: Word, k: int) -> Word:
    base = w if k >= 0 else invert_word(w)
    return reduce_word(base * abs(k))


def parse_word(G: GroupPresentation, text: str) -> Word:
    """Parse ``"a b^-1 c"``; ``""`` and ``"1"`` denote the identity."""
    letters: list[Letter] = []
    for tok in text.replace("*", " ").split():
        if tok == "1":
            continue
        m = re.fullmatch(r"([A-Za-z][A-Za-z0-9_]*)(?:\^(-?\d+))?", tok)
        if not m:
            raise PresentationError(f"bad word token {tok!r}")
        i = G.index(m.group(1))
        e = int(m.group(2) or 1)
        letters.extend([(i, 1 if e > 0 else -1)] * abs(e))
    return reduce_word(letters)


def format_word(G: GroupPresentation, w: Word) -> str:
    if not w:
        return "1"
    return " ".join(G.generators[i].name + ("" if s > 0 else "^-1") for i, s in w)


# -- parsing ----------------------------------------------------------------

def _parse_section(text: str, names: dict[str, int], line: int, col: int) -> Word:
    letters = []
    for m in re.finditer(r"\S+", text):
        tok = m.group(0)
        if tok == "1":
            continue
        tm = re.fullmatch(r"([A-Za-z][A-Za-z0-9_]*)(\^-1)?", tok)
        if not tm:
            raise PresentationError(f"bad section token {tok!r}", line, col + m.start())
        if tm.group(1) not in names:
            raise PresentationError(f"undeclared generator {tm.group(1)!r}", line, col + m.start())
        letters.append((names[tm.group(1)], -1 if tm.group(2) else 1))
    return reduce_word(letters)


_GEN_RE = re.compile(r"gen\s+(?P<name>\S+)\s*=\s*\((?P<secs>[^()]*)\)\s*(?P<perm>.*)\Z")


def parse_presentation(text: str, name: str = "") -> GroupPresentation:
    """Parse the line-oriented presentation DSL.

    ::

        degree 2
        gen a = (1, b) ()
        gen b = (1, a) (1 2)
    """
    degree = None
    raw: list[tuple[str, str, str, int, int, int]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].rstrip()
        if not body.strip():
            continue
        indent = len(body) - len(body.lstrip())
        stmt = body.strip()
        if stmt.startswith("degree"):
            parts = stmt.split()
            if len(parts) != 2 or not parts[1].isdigit():
                raise PresentationError("expected 'degree <d>'", lineno, indent + 1)
            if degree is not None:
                raise PresentationError("degree declared twice", lineno, indent + 1)
            degree = int(parts[1])
            if not 2 <= degree <= core.MAX_DEGREE:
                raise PresentationError(f"degree must be in [2, {core.MAX_DEGREE}]", lineno, indent + 8)
            continue
        m = _GEN_RE.match(stmt)
        if not m:
            raise PresentationError("expected 'gen <name> = (<sections>) <perm>'", lineno, indent + 1)
        if not _NAME_RE.match(m.group("name")):
            raise PresentationError(f"bad generator name {m.group('name')!r}", lineno, indent + m.start("name") + 1)
        raw.append((m.group("name"), m.group("secs"), m.group("perm"), lineno,
                    indent + m.start("secs") + 1, indent + m.start("perm") + 1))
    if degree is None:
        raise PresentationError("missing 'degree' statement")
    if not raw:
        raise PresentationError("no generators declared")
    names: dict[str, int] = {}
    for gname, *_rest in raw:
        if gname in names:
            raise PresentationError(f"generator {gname!r} declared twice", _rest[2], 1)
        names[gname] = len(names)
    gens = []
    for gname, secs, perm, lineno, scol, pcol in raw:
        pieces = secs.split(",")
        if len(pieces) != degree:
            raise PresentationError(
                f"generator {gname!r} has {len(pieces)} sections, degree is {degree}", lineno, scol)
        words = []
        col = scol
        for piece in pieces:
            words.append(_parse_section(piece, names, lineno, col))
            col += len(piece) + 1
        try:
            root = core.parse_cycles(perm, degree)
        except core.PortraitError as exc:
            raise PresentationError(f"invalid permutation: {exc}", lineno, pcol) from None
        gens.append(GeneratorRecursion(gname, tuple(words), root))
    return GroupPresentation(degree, tuple(gens), name=name)


# -- evaluation -------------------------------------------------------------

@lru_cache(maxsize=4096)
def _generator_leaves(G: GroupPresentation, index: int, sign: int, n: int) -> np.ndarray:
    d = G.degree
    if n == 0:
        out = np.zeros(1, dtype=np.int64)
    elif sign < 0:
        out = core.leaves_inverse(_generator_leaves(G, index, 1, n)[None, :])[0]
    else:
        gen = G.generators[index]
        sub = d**(n - 1)
        out = np.empty(d**n, dtype=np.int64)
        for x in range(d):
            out[x * sub:(x + 1) * sub] = gen.root[x] * sub + word_leaves(G, gen.sections[x], n - 1)
    out.setflags(write=False)
    return out


def word_leaves(G: GroupPresentation, w: Word, n: int) -> np.ndarray:
    """Leaf permutation of depth ``n`` realised by word ``w``."""
    acc = np.arange(G.degree**n, dtype=np.int64)
    for i, s in reversed(w):
        acc = _generator_leaves(G, i, s, n)[acc]
    return acc


def generator_leaves(G: GroupPresentation, n: int, inverses: bool = False) -> list[np.ndarray]:
    out = [_generator_leaves(G, i, 1, n) for i in range(len(G.generators))]
    if inverses:
        out += [_generator_leaves(G, i, -1, n) for i in range(len(G.generators))]
    return out


def evaluate(G: GroupPresentation, w: Word | str, n: int) -> Portrait:
    """The depth-``n`` portrait of the element ``w``."""
    if isinstance(w, str):
        w = parse_word(G, w)
    return core.from_leaf_permutation(G.degree, n, word_leaves(G, w, n))


def root_permutation(G: GroupPresentation, w: Word) -> Perm:
    p = core.perm_identity(G.degree)
    for i, s in reversed(w):
        r = G.generators[i].root
        p = core.perm_compose(r if s > 0 else core.perm_inverse(r), p)
    return p


def _letter_section(G: GroupPresentation, letter: Letter, x: int) -> tuple[Word, int]:
    """Section of one signed generator at 0-based letter ``x`` and the image of ``x``."""
    i, s = letter
    gen = G.generators[i]
    if s > 0:
        return gen.sections[x], gen.root[x]
    y = core.perm_inverse(gen.root)[x]
    return invert_word(gen.sections[y]), y


def section_word_letter(G: GroupPresentation, w: Word, x: int) -> tuple[Word, int]:
    """Section of ``w`` at 0-based letter ``x`` and ``w(x)`` (0-based)."""
    pieces = []
    cur = x
    for letter in reversed(w):
        sec, cur = _letter_section(G, letter, cur)
        pieces.append(sec)
    return reduce_word([c for sec in reversed(pieces) for c in sec]), cur


def section_word(G: GroupPresentation, w: Word | str, v: Sequence[int]) -> Word:
    """A word for the section of ``w`` at vertex ``v`` (1-based letters)."""
    if isinstance(w, str):
        w = parse_word(G, w)
    for x in v:
        if not 1 <= x <= G.degree:
            raise PresentationError(f"letter {x} outside 1..{G.degree}")
        w, _ = section_word_letter(G, w, x - 1)
    return w


# -- element equality ---------------------------------------------------------

class Verdict(enum.Enum):
    EQUAL = "equal"
    NOT_EQUAL = "not_equal"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class Equality:
    verdict: Verdict
    level: int | None = None        # first level where the portraits differ
    vertex: tuple[int, ...] | None = None

    def __bool__(self) -> bool:
        return self.verdict is Verdict.EQUAL


def is_trivial(G: GroupPresentation, w: Word, depth_cap: int = 30, pair_cap: int = 20000) -> Equality:
    """Coinductive triviality test for ``w``.

    Explores sections breadth first.  A non-identity root permutation at a
    vertex of length k proves ``w`` acts nontrivially on level k+1.  If the
    explored set closes under sections with identity roots everywhere it is
    a bisimulation with the identity, hence ``w`` is trivial.
    """
    w = reduce_word(w)
    seen = {w}
    queue = deque([(w, ())])
    ident = core.perm_identity(G.degree)
    while queue:
        u, path = queue.popleft()
        if not u:
            continue
        if root_permutation(G, u) != ident:
            return Equality(Verdict.NOT_EQUAL, level=len(path) + 1, vertex=path)
        if len(path) >= depth_cap:
            return Equality(Verdict.UNKNOWN)
        for x in range(G.degree):
            sec, _ = section_word_letter(G, u, x)
            if sec and sec not in seen:
                if len(seen) >= pair_cap:
                    return Equality(Verdict.UNKNOWN)
                seen.add(sec)
                queue.append((sec, path + (x + 1,)))
    return Equality(Verdict.EQUAL)


def equal_elements(G: GroupPresentation, w1: Word | str, w2: Word | str,
                   depth_cap: int = 30, pair_cap: int = 20000) -> Equality:
    """Decide ``w1 == w2`` by bisimulation of ``w1 w2^-1`` against the identity."""
    if isinstance(w1, str):
        w1 = parse_word(G, w1)
    if isinstance(w2, str):
        w2 = parse_word(G, w2)
    if depth_cap < 1 or pair_cap < 1:
        raise ValueError("caps must be >= 1")
    return is_trivial(G, multiply_words(w1, invert_word(w2)), depth_cap, pair_cap)
