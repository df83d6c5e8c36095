"""Built-in groups and the numerics of the exceptional polynomial family."""
from __future__ import annotations

import cmath
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from . import core
from .engine import GroupPresentation, PresentationError, parse_presentation, word_leaves
from .finite_type import FiniteTypeError, FiniteTypeSpec, coset_type, iterated_wreath, named_perm_group

Group = Union[GroupPresentation, FiniteTypeSpec]

INF = math.inf


class ZooError(ValueError):
    pass


@dataclass
class ZooEntry:
    key: str
    group: Group
    facts: dict[str, str] = field(default_factory=dict)
    provenance: str = ""

    @property
    def degree(self) -> int:
        return self.group.degree

    @property
    def is_presentation(self) -> bool:
        return isinstance(self.group, GroupPresentation)


GRIGORCHUK = """\
degree 2
gen a = (1, 1) (1 2)
gen b = (a, c) ()
gen c = (a, d) ()
gen d = (1, b) ()
"""

BASILICA = """\
degree 2
gen a = (1, b) ()
gen b = (1, a) (1 2)
"""

OB = BASILICA + "gen c = (1, 1) (1 2)\n"

CHEBYSHEV2 = """\
degree 2
gen a = (1, 1) (1 2)
gen b = (b, a) ()
"""


def _is_prime(p: int) -> bool:
    return p >= 2 and all(p % q for q in range(2, math.isqrt(p) + 1))


def ggs_presentation(p: int, alpha: Sequence[int], ssf: bool = False) -> GroupPresentation:
    """a = (1,...,1)(1 2 ... p), b = (a^alpha_1, ..., a^alpha_{p-1}, b)."""
    if not _is_prime(p) or p < 3:
        raise ZooError(f"GGS needs a prime p >= 3, got {p}")
    alpha = [int(x) % p for x in alpha]
    if len(alpha) != p - 1:
        raise ZooError(f"GGS needs {p - 1} exponents, got {len(alpha)}")
    if not any(alpha):
        raise ZooError("GGS exponent vector must be nonzero")
    if ssf and sum(alpha) % p:
        raise ZooError("super strongly fractal GGS variant needs sum(alpha) = 0 mod p")
    secs = []
    for e in alpha:
        secs.append(" ".join(["a"] * e) if e else "1")
    secs.append("b")
    cycle = "(" + " ".join(str(i) for i in range(1, p + 1)) + ")"
    text = f"degree {p}\ngen a = ({', '.join(['1'] * p)}) {cycle}\ngen b = ({', '.join(secs)}) ()\n"
    return parse_presentation(text, name=f"ggs:p={p},alpha={'.'.join(map(str, alpha))}")


def exceptional_presentation(d: int) -> GroupPresentation:
    """g0 = (g0, 1, ..., 1)(2 ... d), g1 = (g1, 1, ..., 1)(1 2)."""
    if d < 3:
        raise ZooError("the exceptional family needs d >= 3")
    core.check_degree(d)
    ones = ", ".join(["1"] * (d - 1))
    cyc = "(" + " ".join(str(i) for i in range(2, d + 1)) + ")"
    text = f"degree {d}\ngen g0 = (g0, {ones}) {cyc}\ngen g1 = (g1, {ones}) (1 2)\n"
    return parse_presentation(text, name=f"exceptional:d={d}")


def _parse_params(text: str) -> dict[str, str]:
    out = {}
    for part in filter(None, text.split(",")):
        if "=" not in part:
            raise ZooError(f"expected key=value, got {part!r}")
        k, v = part.split("=", 1)
        out[k.strip()] = v.strip()
    return out


ZOO_KEYS = {
    "grigorchuk": "first Grigorchuk group (binary tree)",
    "basilica": "Basilica group, IMG(z^2 - 1)",
    "ob": "Basilica with the rooted swap c = (1,1)(1 2) added",
    "chebyshev2": "IMG of the degree-2 Chebyshev polynomial",
    "ggs:p=P,alpha=A1.A2...": "GGS group on the p-adic tree; add ssf=1 to enforce sum(alpha) = 0 mod p",
    "exceptional:d=D": "IMG of the exceptional polynomial z(z-a)^(d-1), d >= 3",
    "wreath:symN|altN|cycN": "iterated wreath product of a permutation group (finite type)",
    "coset:Q-P": "closed group whose labels lie in one coset of Q in P, e.g. coset:alt3-sym3",
    "custom:PATH": "presentation file in the .grp DSL",
}


def build_zoo_group(key: str) -> ZooEntry:
    """Resolve a CLI group key such as ``ggs:p=3,alpha=1.2`` or ``wreath:sym2``."""
    key = key.strip()
    head, _, rest = key.partition(":")
    head = head.lower()
    try:
        if head == "grigorchuk":
            return ZooEntry(key, parse_presentation(GRIGORCHUK, "grigorchuk"),
                            {"super_strongly_fractal": "yes"},
                            "standard recursion from the literature")
        if head == "basilica":
            return ZooEntry(key, parse_presentation(BASILICA, "basilica"),
                            {"nucleus": "1, a, a^-1, b, b^-1, a b^-1, b a^-1",
                             "n1": "1"})
        if head == "ob":
            return ZooEntry(key, parse_presentation(OB, "ob"),
                            {"nucleus": "same as basilica", "jones": "holds"})
        if head in ("chebyshev2", "chebyshev"):
            return ZooEntry(key, parse_presentation(CHEBYSHEV2, "chebyshev2"), {"fpp": "1/4"})
        if head == "ggs":
            params = _parse_params(rest)
            p = int(params.get("p", "3"))
            alpha_text = params.get("alpha")
            if alpha_text is None:
                alpha = [1] * (p - 2) + [2 - p]
            else:
                alpha = [int(x) for x in alpha_text.replace(" ", "").split(".") if x]
            ssf = params.get("ssf", "0") not in ("0", "false", "no")
            return ZooEntry(key, ggs_presentation(p, alpha, ssf), {"jones": "fails"})
        if head in ("exceptional", "exceptional_img"):
            d = int(_parse_params(rest).get("d", "3"))
            return ZooEntry(key, exceptional_presentation(d),
                            {"fpp": "0", "super_strongly_fractal": "yes",
                             "chi": str(exceptional_chi(d))})
        if head == "wreath":
            d, gens = named_perm_group(rest)
            return ZooEntry(key, iterated_wreath(gens, d, name=key))
        if head == "coset":
            q_name, sep, p_name = rest.partition("-")
            if not sep:
                raise ZooError("coset key needs the form coset:Q-P")
            dq, q_gens = named_perm_group(q_name)
            dp, p_gens = named_perm_group(p_name)
            if dq != dp:
                raise ZooError("Q and P must act on the same number of points")
            return ZooEntry(key, coset_type(q_gens, p_gens, dp, name=key),
                            {"fpp": "1/2"} if rest.lower() == "alt3-sym3" else {})
        if head == "custom":
            path = Path(rest)
            return ZooEntry(key, parse_presentation(path.read_text(), name=path.stem),
                            provenance=str(path))
    except (FiniteTypeError, PresentationError, ZooError) as exc:
        raise ZooError(f"{key}: {exc}") from None
    except ValueError as exc:
        raise ZooError(f"{key}: bad parameter ({exc})") from None
    except OSError as exc:
        raise ZooError(f"{key}: {exc}") from None
    raise ZooError(f"unknown group key {key!r}")


# -- exceptional polynomial numerics ---------------------------------------------

@dataclass(frozen=True)
class ComplexParameter:
    re: float
    im: float
    branch: int

    @property
    def value(self) -> complex:
        return complex(self.re, self.im)


def exceptional_polynomial(z: complex, a: complex, d: int) -> complex:
    return z * (z - a) ** (d - 1)


def exceptional_derivative(z: complex, a: complex, d: int) -> complex:
    return (z - a) ** (d - 2) * (d * z - a)


def exceptional_parameter(d: int, branch: int = 0) -> ComplexParameter:
    """The parameter a making a/d a fixed critical point of z(z-a)^(d-1).

    Solving f(a/d) = a/d gives a^(d-1) = (d/(1-d))^(d-1), so a is d/(1-d)
    times a (d-1)st root of unity selected by ``branch``.
    """
    if d < 3:
        raise ZooError("need d >= 3")
    if not 0 <= branch < d - 1:
        raise ZooError(f"branch must lie in [0, {d - 2}]")
    zeta = cmath.exp(2j * math.pi * branch / (d - 1))
    a = zeta * d / (1 - d)
    return ComplexParameter(a.real, a.imag, branch)


def hyperbolicity_chi(nu_values: Sequence[float | int]) -> Fraction | float:
    """2 - sum(1 - 1/nu), with nu = inf contributing 1.  Exact unless infinite."""
    total = Fraction(2)
    for nu in nu_values:
        if nu == INF:
            total -= 1
            continue
        if int(nu) != nu or nu < 1:
            raise ValueError(f"ramification {nu!r} must be a positive integer or inf")
        total -= 1 - Fraction(1, int(nu))
    return total


def exceptional_chi(d: int) -> Fraction:
    return hyperbolicity_chi([d - 1, INF, INF])


# -- transitivity of generator products ----------------------------------------------

def _single_cycle(perm: np.ndarray) -> bool:
    seen = 0
    x = 0
    while True:
        x = int(perm[x])
        seen += 1
        if x == 0:
            return seen == perm.size


def product_of_generators_transitive(G: GroupPresentation, n: int, all_orders: bool = False) -> bool:
    """Does g_1 ... g_l act as one d^n-cycle on level n (for one or every ordering)?"""
    if n < 1:
        raise ValueError("n must be >= 1")
    idx = range(len(G.generators))
    orders = itertools.permutations(idx) if all_orders else [tuple(idx)]
    for order in orders:
        w = tuple((i, 1) for i in order)
        if not _single_cycle(word_leaves(G, w, n)):
            return False
    return True
