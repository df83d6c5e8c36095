"""Closed groups of finite type given by permutation groups on the letters.

``iterated_wreath(P)``: every label lies in P.
``coset_type(Q, P)``: all labels of an element lie in one coset of Q in P.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from . import core
from .core import Perm


class FiniteTypeError(ValueError):
    pass


def perm_group_closure(gens: Sequence[Perm], d: int) -> tuple[Perm, ...]:
    ident = core.perm_identity(d)
    elems = {ident}
    frontier = [ident]
    while frontier:
        nxt = []
        for p in frontier:
            for g in gens:
                q = core.perm_compose(g, p)
                if q not in elems:
                    elems.add(q)
                    nxt.append(q)
        frontier = nxt
    return tuple(sorted(elems))


def named_perm_group(name: str, d: int | None = None) -> tuple[int, tuple[Perm, ...]]:
    """Generators of ``symN``, ``altN`` or ``cycN`` as (degree, generators)."""
    name = name.strip().lower()
    for prefix in ("sym", "alt", "cyc"):
        if name.startswith(prefix) and name[len(prefix):].isdigit():
            n = int(name[len(prefix):])
            break
    else:
        raise FiniteTypeError(f"unknown permutation group {name!r}")
    if d is not None and d != n:
        raise FiniteTypeError(f"{name} acts on {n} points, expected {d}")
    core.check_degree(n)
    cycle = tuple(list(range(1, n)) + [0])
    if prefix == "sym":
        swap = tuple([1, 0] + list(range(2, n)))
        return n, (cycle, swap)
    if prefix == "cyc":
        return n, (cycle,)
    # alternating: 3-cycles (0 1 k)
    gens = []
    for k in range(2, n):
        p = list(range(n))
        p[0], p[1], p[k] = 1, k, 0
        gens.append(tuple(p))
    return n, tuple(gens) if gens else (core.perm_identity(n),)


@dataclass(frozen=True)
class FiniteTypeSpec:
    kind: str                       # "iterated_wreath" or "coset_type"
    degree: int
    p_gens: tuple[Perm, ...]
    q_gens: tuple[Perm, ...] = ()
    name: str = ""

    def __post_init__(self):
        core.check_degree(self.degree)
        if self.kind not in ("iterated_wreath", "coset_type"):
            raise FiniteTypeError(f"unknown finite-type kind {self.kind!r}")
        for g in self.p_gens + self.q_gens:
            if sorted(g) != list(range(self.degree)):
                raise FiniteTypeError(f"{g} is not a permutation of {self.degree} points")
        if self.kind == "coset_type":
            P, Q = set(self.p_elements), set(self.q_elements)
            if not Q <= P:
                raise FiniteTypeError("Q must be a subgroup of P")
            if len(Q) == 1:
                raise FiniteTypeError("coset type requires a nontrivial Q")
            for p in P:
                pinv = core.perm_inverse(p)
                for q in self.q_gens:
                    if core.perm_compose(core.perm_compose(p, q), pinv) not in Q:
                        raise FiniteTypeError("Q is not normal in P")

    @cached_property
    def p_elements(self) -> tuple[Perm, ...]:
        return perm_group_closure(self.p_gens, self.degree)

    @cached_property
    def q_elements(self) -> tuple[Perm, ...]:
        return perm_group_closure(self.q_gens, self.degree)

    @cached_property
    def label_classes(self) -> tuple[tuple[Perm, ...], ...]:
        """Sets of labels that may appear together in one element."""
        if self.kind == "iterated_wreath":
            return (self.p_elements,)
        seen: set[Perm] = set()
        classes = []
        for p in self.p_elements:
            if p in seen:
                continue
            coset = tuple(sorted(core.perm_compose(p, q) for q in self.q_elements))
            seen.update(coset)
            classes.append(coset)
        return tuple(classes)

    @cached_property
    def class_ranks(self) -> tuple[np.ndarray, ...]:
        return tuple(core.perm_rank(np.array(c, dtype=np.int16)) for c in self.label_classes)

    def quotient_order(self, n: int) -> int:
        N = core.num_internal(self.degree, n)
        if N == 0:
            return 1
        return sum(len(c) ** N for c in self.label_classes)

    def quotient_order_exceeds(self, n: int, limit: int) -> bool:
        """``quotient_order(n) > limit`` without forming huge integers."""
        N = core.num_internal(self.degree, n)
        largest = max(len(c) for c in self.label_classes)
        if N * math.log2(largest) > limit.bit_length() + 1:
            return True
        return self.quotient_order(n) > limit

    def canonical_text(self) -> str:
        fmt = lambda gens: " ".join(core.format_cycles(g) for g in gens)
        text = f"finite-type {self.kind}\ndegree {self.degree}\nP {fmt(self.p_gens)}\n"
        if self.kind == "coset_type":
            text += f"Q {fmt(self.q_gens)}\n"
        return text

    def sample_codes(self, n: int, count: int, rng: np.random.Generator) -> np.ndarray:
        """Haar-uniform label ranks of ``count`` elements of the depth-n quotient."""
        N = core.num_internal(self.degree, n)
        classes = self.class_ranks
        out = np.empty((count, N), dtype=core.code_dtype(self.degree))
        if len(classes) == 1:
            ranks = classes[0]
            out[:] = ranks[rng.integers(0, ranks.size, size=(count, N))]
            return out
        # cosets of Q all have |Q| elements, so a uniform coset is Haar-correct
        which = rng.integers(0, len(classes), size=count)
        picks = rng.integers(0, len(self.q_elements), size=(count, N))
        table = np.stack(classes)
        out[:] = table[which[:, None], picks]
        return out


def iterated_wreath(gens: Sequence[Perm], d: int, name: str = "") -> FiniteTypeSpec:
    return FiniteTypeSpec("iterated_wreath", d, tuple(gens), name=name)


def coset_type(q_gens: Sequence[Perm], p_gens: Sequence[Perm], d: int, name: str = "") -> FiniteTypeSpec:
    return FiniteTypeSpec("coset_type", d, tuple(p_gens), tuple(q_gens), name=name)


def factorial_order(d: int, n: int) -> int:
    """|Aut(T^n)| for the d-regular tree."""
    return math.factorial(d) ** core.num_internal(d, n)
