"""Nucleus of a contracting self-similar group, the set N1 and fixed boundary ends."""
from __future__ import annotations

import hashlib
from collections import deque
from dataclasses import dataclass, field

import networkx as nx

from . import core
from .engine import (GroupPresentation, Verdict, Word, equal_elements, format_word,
                     multiply_words, parse_word, root_permutation, section_word_letter,
                     word_leaves)

CONTRACTING = "contracting_with_nucleus"
INCONCLUSIVE = "inconclusive"


class NucleusError(ValueError):
    pass


def _digest_depth(d: int) -> int:
    depth = 1
    while d ** (depth + 1) <= 2048:
        depth += 1
    return depth


def _word_key(w: Word) -> tuple:
    """Shorter words first, then positive letters before inverses."""
    return (len(w), tuple((i, -s) for i, s in w))


class _ElementTable:
    """Words deduplicated as group elements: portrait digest, then bisimulation."""

    def __init__(self, G: GroupPresentation, depth_cap: int, equality_pair_cap: int):
        self.G = G
        self.depth = _digest_depth(G.degree)
        self.depth_cap = depth_cap
        self.equality_pair_cap = equality_pair_cap
        self.words: list[Word] = []
        self.digests: list[bytes] = []
        self.by_digest: dict[bytes, list[int]] = {}
        self.sections: dict[int, tuple[int, ...]] = {}
        self.unknown = False

    def __len__(self) -> int:
        return len(self.words)

    def find_or_add(self, w: Word) -> tuple[int, bool]:
        key = word_leaves(self.G, w, self.depth).tobytes()
        bucket = self.by_digest.setdefault(key, [])
        for i in bucket:
            if self.words[i] == w:
                return i, False
            eq = equal_elements(self.G, w, self.words[i], self.depth_cap, self.equality_pair_cap)
            if eq.verdict is Verdict.EQUAL:
                if _word_key(w) < _word_key(self.words[i]):
                    self.words[i] = w
                return i, False
            if eq.verdict is Verdict.UNKNOWN:
                self.unknown = True
        self.words.append(w)
        self.digests.append(key)
        bucket.append(len(self.words) - 1)
        return len(self.words) - 1, True

    def close_under_sections(self, limit: int) -> bool:
        """Compute sections of every element; False if the table outgrows ``limit``."""
        queue = deque(i for i in range(len(self.words)) if i not in self.sections)
        while queue:
            i = queue.popleft()
            if i in self.sections:
                continue
            kids = []
            for x in range(self.G.degree):
                sec, _ = section_word_letter(self.G, self.words[i], x)
                j, new = self.find_or_add(sec)
                kids.append(j)
                if new:
                    queue.append(j)
                    if len(self.words) > limit:
                        return False
            self.sections[i] = tuple(kids)
        return True

    def graph(self) -> nx.MultiDiGraph:
        g = nx.MultiDiGraph()
        g.add_nodes_from(range(len(self.words)))
        for i, kids in self.sections.items():
            for x, j in enumerate(kids):
                g.add_edge(i, j, letter=x + 1)
        return g


def _cycle_reachable(g: nx.MultiDiGraph) -> set[int]:
    on_cycle = set()
    for comp in nx.strongly_connected_components(g):
        if len(comp) > 1 or any(g.has_edge(v, v) for v in comp):
            on_cycle |= comp
    out = set(on_cycle)
    for v in on_cycle:
        out |= nx.descendants(g, v)
    return out


@dataclass
class NucleusElement:
    word: Word
    text: str
    digest: str


@dataclass
class NucleusReport:
    group: GroupPresentation
    status: str
    elements: list[NucleusElement]
    section_graph: list[tuple[int, int, int]]      # (element, letter, section element)
    rounds: int = 0
    reason: str = ""
    n1: dict[int, tuple[int, ...]] = field(default_factory=dict)
    end_counts: dict[int, "FixedEndVerdict"] = field(default_factory=dict)

    @property
    def conclusive(self) -> bool:
        return self.status == CONTRACTING

    def __len__(self) -> int:
        return len(self.elements)

    def words(self) -> list[Word]:
        return [e.word for e in self.elements]

    def index_of(self, w: Word | str) -> int:
        """Index of the element equal to ``w``, or -1."""
        if isinstance(w, str):
            w = parse_word(self.group, w)
        for i, e in enumerate(self.elements):
            if e.word == w:
                return i
        for i, e in enumerate(self.elements):
            if equal_elements(self.group, w, e.word):
                return i
        return -1

    def root_perm(self, i: int) -> core.Perm:
        return root_permutation(self.group, self.elements[i].word)

    def to_dict(self) -> dict:
        out = {
            "status": self.status,
            "rounds": self.rounds,
            "reason": self.reason,
            "elements": [{"word": e.text, "digest": e.digest} for e in self.elements],
            "section_graph": [list(t) for t in self.section_graph],
        }
        if self.status == CONTRACTING:
            n1 = self.n1 or n1_set(self)
            out["n1"] = [{"element": self.elements[i].text, "witness": list(w)} for i, w in n1.items()]
            out["end_counts"] = [
                {"element": self.elements[i].text, **fixed_boundary_count(self, i).to_dict()}
                for i in range(len(self.elements))
            ]
        return out


def compute_nucleus(G: GroupPresentation, depth_cap: int = 30, pair_cap: int = 20000,
                    equality_pair_cap: int = 20000, max_rounds: int = 64) -> NucleusReport:
    """Nucleus candidate for a contracting group.

    The working set C starts as the generators, their inverses and the
    identity, closed under sections.  N is the part of C reachable from a
    cycle of its section graph.  Products of pairs from N are added to C
    (with their sections) until N stops growing.  ``pair_cap`` bounds the
    size of C; hitting it, or an undecided equality, gives an inconclusive
    report.
    """
    if min(depth_cap, pair_cap, equality_pair_cap, max_rounds) < 1:
        raise ValueError("caps must be >= 1")
    table = _ElementTable(G, depth_cap, equality_pair_cap)
    table.find_or_add(())
    for i in range(len(G.generators)):
        table.find_or_add(((i, 1),))
        table.find_or_add(((i, -1),))
    status, reason = CONTRACTING, ""
    nucleus: set[int] = set()
    rounds = 0
    while True:
        rounds += 1
        if len(table) > pair_cap or not table.close_under_sections(pair_cap):
            status, reason = INCONCLUSIVE, "pair_cap reached"
            break
        current = _cycle_reachable(table.graph())
        if current == nucleus:
            break
        nucleus = current
        if rounds >= max_rounds:
            status, reason = INCONCLUSIVE, "max_rounds reached"
            break
        members = sorted(nucleus)
        for a in members:
            for b in members:
                table.find_or_add(multiply_words(table.words[a], table.words[b]))
                if len(table) > pair_cap:
                    break
            if len(table) > pair_cap:
                break
    if table.unknown and status == CONTRACTING:
        status, reason = INCONCLUSIVE, "undecided element equality"
    order = sorted(nucleus, key=lambda i: _word_key(table.words[i]))
    pos = {old: new for new, old in enumerate(order)}
    elements = [NucleusElement(table.words[i], format_word(G, table.words[i]),
                               hashlib.sha256(table.digests[i]).hexdigest()[:16]) for i in order]
    edges = []
    for i in order:
        for x, j in enumerate(table.sections.get(i, ())):
            if j in pos:
                edges.append((pos[i], x + 1, pos[j]))
    return NucleusReport(G, status, elements, edges, rounds, reason)


# -- N1 and fixed ends ----------------------------------------------------------

def _fixed_letter_edges(report: NucleusReport) -> dict[int, list[tuple[int, int]]]:
    """Edges g -> g|_x for letters x fixed by g, as {g: [(letter, target)]}."""
    roots = [report.root_perm(i) for i in range(len(report.elements))]
    out: dict[int, list[tuple[int, int]]] = {i: [] for i in range(len(report.elements))}
    for g, x, h in report.section_graph:
        if roots[g][x - 1] == x - 1:
            out[g].append((x, h))
    return out


def _require(report: NucleusReport) -> None:
    if not report.conclusive:
        raise NucleusError(f"nucleus report is {report.status}: {report.reason}")


def n1_set(report: NucleusReport) -> dict[int, tuple[int, ...]]:
    """Elements lying on a cycle of the fixed-letter graph, with the cycle's letters."""
    _require(report)
    edges = _fixed_letter_edges(report)
    result: dict[int, tuple[int, ...]] = {}
    for g in range(len(report.elements)):
        # shortest fixed-letter path returning to g
        prev: dict[int, tuple[int, int]] = {}
        queue = deque()
        for x, h in sorted(edges[g]):
            if h == g:
                result[g] = (x,)
                break
            if h not in prev:
                prev[h] = (g, x)
                queue.append(h)
        if g in result:
            continue
        while queue and g not in result:
            u = queue.popleft()
            for x, h in sorted(edges[u]):
                if h == g:
                    letters = [x]
                    while u != g:
                        u, y = prev[u]
                        letters.append(y)
                    result[g] = tuple(reversed(letters))
                    break
                if h not in prev:
                    prev[h] = (u, x)
                    queue.append(h)
    report.n1 = result
    return result


@dataclass(frozen=True)
class FixedEndVerdict:
    element: int
    classification: str                    # "Zero", "Finite" or "Infinite"
    count: int | None = None               # number of fixed ends when Finite
    branching: int | None = None           # element where fixed ends branch, when Infinite
    ends: tuple[tuple[tuple[int, ...], tuple[int, ...]], ...] = ()   # (prefix, period)

    def __str__(self) -> str:
        return f"Finite({self.count})" if self.classification == "Finite" else self.classification

    def to_dict(self) -> dict:
        return {"classification": str(self), "count": self.count, "branching": self.branching,
                "ends": [{"prefix": list(p), "period": list(c)} for p, c in self.ends]}


def _pruned(edges: dict[int, list[tuple[int, int]]]) -> dict[int, list[tuple[int, int]]]:
    alive = set(edges)
    changed = True
    while changed:
        changed = False
        for v in list(alive):
            if not any(h in alive for _, h in edges[v]):
                alive.discard(v)
                changed = True
    return {v: [(x, h) for x, h in edges[v] if h in alive] for v in alive}


def fixed_boundary_count(report: NucleusReport, g: int | Word | str, max_ends: int = 64) -> FixedEndVerdict:
    """Number of boundary points fixed by nucleus element ``g``.

    The fixed-letter graph is pruned to vertices that keep an outgoing edge;
    fixed ends of g are the infinite paths from g in it.  They are infinite
    in number exactly when some reachable vertex on a cycle has two or more
    outgoing edges; otherwise every path settles into a simple cycle with
    no exits and the paths are counted directly.
    """
    _require(report)
    if not isinstance(g, int):
        g = report.index_of(g)
    if not 0 <= g < len(report.elements):
        raise NucleusError("element is not in the nucleus")
    pruned = _pruned(_fixed_letter_edges(report))
    if g not in pruned:
        return FixedEndVerdict(g, "Zero", count=0)
    graph = nx.MultiDiGraph()
    graph.add_nodes_from(pruned)
    for v, es in pruned.items():
        for x, h in es:
            graph.add_edge(v, h, letter=x)
    on_cycle = set()
    for comp in nx.strongly_connected_components(graph):
        if len(comp) > 1 or graph.has_edge(next(iter(comp)), next(iter(comp))):
            on_cycle |= comp
    reach = {g} | nx.descendants(graph, g)
    for v in sorted(reach):
        if v in on_cycle and len(pruned[v]) >= 2:
            return FixedEndVerdict(g, "Infinite", branching=v)
    # every reachable cycle is a simple cycle without exits
    ends: list[tuple[tuple[int, ...], tuple[int, ...]]] = []

    def period(v: int) -> tuple[int, ...]:
        letters, u = [], v
        while True:
            x, u = pruned[u][0]
            letters.append(x)
            if u == v:
                return tuple(letters)

    count_memo: dict[int, int] = {}

    def count(v: int) -> int:
        if v not in count_memo:
            count_memo[v] = 1 if v in on_cycle else sum(count(h) for _, h in pruned[v])
        return count_memo[v]

    stack = [(g, ())]
    while stack and len(ends) < max_ends:
        v, prefix = stack.pop()
        if v in on_cycle:
            ends.append((prefix, period(v)))
            continue
        for x, h in reversed(pruned[v]):
            stack.append((h, prefix + (x,)))
    return FixedEndVerdict(g, "Finite", count=count(g), ends=tuple(ends))


@dataclass
class JonesResult:
    verdict: str                                  # "holds", "fails_with_witness", "inconclusive"
    witness: str | None = None
    reason: str = ""
    nucleus: NucleusReport | None = None
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "witness": self.witness, "reason": self.reason,
                "details": self.details}


def check_jones_condition(G: GroupPresentation, level: int = 3, depth_cap: int = 30,
                          pair_cap: int = 20000, element_limit: int = 5_000_000) -> JonesResult:
    """Sufficient condition for null fixed-point proportion.

    Holds when G is contracting (nucleus found), level-transitive and has the
    martingale property up to ``level``, and every element of N1 fixes
    infinitely many ends.
    """
    from .quotient import check_martingale_condition, is_level_transitive

    report = compute_nucleus(G, depth_cap=depth_cap, pair_cap=pair_cap)
    if not report.conclusive:
        return JonesResult("inconclusive", reason=report.reason, nucleus=report)
    trans = is_level_transitive(G, level, element_limit)
    details: dict = {"nucleus_size": len(report), "level": level,
                     "orbit_sizes": list(trans.orbit_sizes)}
    if not trans.transitive:
        return JonesResult("fails_with_witness", reason="not level-transitive",
                           nucleus=report, details=details)
    mart = check_martingale_condition(G, level, element_limit)
    details["martingale"] = mart.passed
    if not mart.passed:
        return JonesResult("fails_with_witness", reason="martingale condition fails",
                           nucleus=report, details={**details, "martingale_witness": mart.witness})
    n1 = n1_set(report)
    details["n1"] = [report.elements[i].text for i in sorted(n1)]
    verdicts = {i: fixed_boundary_count(report, i) for i in sorted(n1)}
    details["end_counts"] = {report.elements[i].text: str(v) for i, v in verdicts.items()}
    bad = [i for i, v in verdicts.items() if v.classification != "Infinite"]
    if bad:
        i = min(bad, key=lambda j: _word_key(report.elements[j].word))
        return JonesResult("fails_with_witness", witness=report.elements[i].text,
                           reason="N1 element with finitely many fixed ends",
                           nucleus=report, details=details)
    return JonesResult("holds", nucleus=report, details=details)
