"""Self-similar groups acting on regular rooted trees: finite quotients, fractality,
nuclei and fixed-point proportions."""
from __future__ import annotations

__version__ = "0.1.0"

from .core import Portrait, canonical_decode, canonical_encode, compose, invert, section, truncate
from .engine import GroupPresentation, equal_elements, evaluate, parse_presentation
from .finite_type import FiniteTypeSpec, coset_type, iterated_wreath
from .quotient import (LevelQuotient, LimitExceeded, check_fractality, check_martingale_condition,
                       enumerate_quotient, is_level_transitive)
from .zoo import build_zoo_group

__all__ = [
    "Portrait", "canonical_decode", "canonical_encode", "compose", "invert", "section", "truncate",
    "GroupPresentation", "equal_elements", "evaluate", "parse_presentation",
    "FiniteTypeSpec", "coset_type", "iterated_wreath",
    "LevelQuotient", "LimitExceeded", "check_fractality", "check_martingale_condition",
    "enumerate_quotient", "is_level_transitive", "build_zoo_group",
]
