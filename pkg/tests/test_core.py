from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from treefpp import core
from treefpp.core import (Portrait, PortraitError, apply, canonical_decode, canonical_encode, compose,
                          fixed_leaves, identity_portrait, invert, section, truncate)


@st.composite
def portraits(draw, d=None, n=None):
    d = draw(st.integers(2, 4)) if d is None else d
    n = draw(st.integers(0, 3 if d < 4 else 2)) if n is None else n
    seed = draw(st.integers(0, 2**32 - 1))
    return core.random_portrait(d, n, np.random.default_rng(seed))


@st.composite
def portrait_pairs(draw):
    d = draw(st.integers(2, 4))
    n = draw(st.integers(0, 3 if d < 4 else 2))
    return draw(portraits(d, n)), draw(portraits(d, n))


def brute_apply(p: Portrait, v):
    """Follow labels down the path, reading each label from the BFS table by hand."""
    d = p.degree
    out, idx = [], 0
    for k, x in enumerate(v):
        row = (d**k - 1) // (d - 1) + idx
        out.append(int(p.labels[row][x - 1]) + 1)
        idx = idx * d + (x - 1)
    return tuple(out)


def test_num_internal_counts_labels():
    assert core.num_internal(2, 0) == 0
    assert core.num_internal(2, 3) == 7
    assert core.num_internal(3, 2) == 4


def test_identity_portrait_basics():
    e = identity_portrait(2, 3)
    assert e.labels.shape == (7, 2)
    assert fixed_leaves(e) == 8
    assert apply(e, (1, 2)) == (1, 2)


def test_depth_zero_is_trivial():
    e = identity_portrait(3, 0)
    assert e.labels.shape == (0, 3)
    assert canonical_decode(canonical_encode(e)) == e
    assert fixed_leaves(e) == 1


def test_portrait_validation():
    with pytest.raises(PortraitError):
        Portrait(2, 1, [[0, 0]])
    with pytest.raises(PortraitError):
        Portrait(2, 2, [[1, 0]])
    with pytest.raises(PortraitError):
        core.check_degree(1)


def test_root_swap_action():
    a = Portrait(2, 2, [[1, 0], [0, 1], [0, 1]])
    assert apply(a, (1, 1)) == (2, 1)
    assert fixed_leaves(a) == 0
    assert compose(a, a) == identity_portrait(2, 2)
    assert invert(a) == a


def test_apply_rejects_deep_vertex():
    with pytest.raises(PortraitError):
        apply(identity_portrait(2, 1), (1, 1))
    with pytest.raises(PortraitError):
        apply(identity_portrait(2, 2), (3,))


def test_perm_rank_matches_lexicographic_order():
    for d in (2, 3, 4):
        perms = list(itertools.permutations(range(d)))
        ranks = core.perm_rank(np.array(perms))
        assert list(ranks) == list(range(math.factorial(d)))


def test_parse_and_format_cycles():
    assert core.parse_cycles("(1 2)(3 4 5)", 5) == (1, 0, 3, 4, 2)
    assert core.parse_cycles("()", 3) == (0, 1, 2)
    assert core.format_cycles((1, 0, 3, 4, 2)) == "(1 2)(3 4 5)"
    with pytest.raises(PortraitError):
        core.parse_cycles("(1 1)", 2)
    with pytest.raises(PortraitError):
        core.parse_cycles("(1 3)", 2)


def test_section_cocycle_brute_force_depth2_binary():
    d, n = 2, 2
    everything = [Portrait(d, n, labels) for labels in itertools.product([[0, 1], [1, 0]], repeat=3)]
    assert len(everything) == 8
    for p in everything:
        for q in everything:
            pq = compose(p, q)
            for v in [(1,), (2,)]:
                assert section(pq, v) == compose(section(p, apply(q, v)), section(q, v))


def test_encoding_distinguishes_depth2_portraits():
    ps = [Portrait(2, 2, labels) for labels in itertools.product([[0, 1], [1, 0]], repeat=3)]
    assert len({canonical_encode(p) for p in ps}) == 8


def test_encoding_is_stable():
    p = Portrait(3, 2, [[1, 2, 0], [0, 1, 2], [2, 1, 0], [1, 0, 2]])
    assert canonical_encode(p).hex() == "545001030002" + "03000502"


def test_decode_rejects_garbage():
    with pytest.raises(PortraitError):
        canonical_decode(b"XX\x01\x02\x00\x01\x00")
    with pytest.raises(PortraitError):
        canonical_decode(b"TP\x01\x02\x00\x02\x00")
    with pytest.raises(PortraitError):
        canonical_decode(b"TP\x02\x02\x00\x01\x00")


def test_encoding_roundtrip_many(rng):
    for _ in range(1000):
        d = int(rng.integers(2, 5))
        p = core.random_portrait(d, int(rng.integers(0, 4 if d < 4 else 3)), rng)
        assert canonical_decode(canonical_encode(p)) == p


def test_leaf_batch_helpers_match_portraits(rng):
    for d, n in [(2, 4), (3, 2), (4, 2)]:
        ps = [core.random_portrait(d, n, rng) for _ in range(20)]
        leaves = core.portraits_to_leaves(ps)
        codes = core.codes_from_leaves(d, n, leaves)
        assert np.array_equal(core.leaves_from_codes(d, n, codes), leaves)
        for p, row in zip(ps, codes):
            assert canonical_encode(p)[6:] == row.tobytes()
        q = ps[::-1]
        ql = core.portraits_to_leaves(q)
        prod = core.leaves_compose(leaves, ql)
        for i in range(len(ps)):
            assert np.array_equal(prod[i], core.leaf_permutation(compose(ps[i], q[i])))
        inv = core.leaves_inverse(leaves)
        assert np.array_equal(inv[0], core.leaf_permutation(invert(ps[0])))
        assert np.array_equal(core.fixed_counts_from_leaves(leaves), [fixed_leaves(p) for p in ps])
        for k in range(n + 1):
            tr = core.leaves_truncate(d, n, leaves, k)
            assert np.array_equal(tr[3], core.leaf_permutation(truncate(ps[3], k)))
        v = (1,) * (n - 1)
        vi = core.vertex_index(d, v)
        sec = core.leaves_section(d, n, leaves, vi, n - 1)
        assert np.array_equal(sec[5], core.leaf_permutation(section(ps[5], v)))


def test_from_leaf_permutation_rejects_non_tree_maps():
    with pytest.raises(PortraitError):
        core.from_leaf_permutation(2, 2, [0, 2, 1, 3])
    p = core.from_leaf_permutation(2, 2, [3, 2, 0, 1])
    assert apply(p, (1, 1)) == (2, 2)


@given(portrait_pairs(), st.data())
def test_action_compatibility(pair, data):
    p, q = pair
    d, n = p.degree, p.depth
    v = tuple(data.draw(st.lists(st.integers(1, d), min_size=0, max_size=n)))
    assert apply(compose(p, q), v) == apply(p, apply(q, v))
    assert apply(p, v) == brute_apply(p, v)


@given(portrait_pairs())
def test_group_laws(pair):
    p, q = pair
    e = identity_portrait(p.degree, p.depth)
    assert compose(p, e) == p == compose(e, p)
    assert compose(p, invert(p)) == e == compose(invert(p), p)
    assert invert(invert(p)) == p
    assert compose(compose(p, q), p) == compose(p, compose(q, p))
    assert invert(compose(p, q)) == compose(invert(q), invert(p))


@given(portrait_pairs(), st.data())
def test_section_cocycle(pair, data):
    p, q = pair
    if p.depth == 0:
        return
    v = tuple(data.draw(st.lists(st.integers(1, p.degree), min_size=1, max_size=p.depth)))
    assert section(compose(p, q), v) == compose(section(p, apply(q, v)), section(q, v))


@given(portrait_pairs(), st.data())
def test_truncation_homomorphism(pair, data):
    p, q = pair
    k = data.draw(st.integers(0, p.depth))
    assert truncate(compose(p, q), k) == compose(truncate(p, k), truncate(q, k))


@settings(max_examples=60)
@given(portraits())
def test_fixed_leaf_parent_is_fixed(p):
    if p.depth == 0:
        return
    if fixed_leaves(p) >= 1:
        assert fixed_leaves(truncate(p, p.depth - 1)) >= 1
    brute = sum(apply(p, v) == v for v in core.level_vertices(p.degree, p.depth))
    assert fixed_leaves(p) == brute


@given(portraits())
def test_encoding_roundtrip_property(p):
    assert canonical_decode(canonical_encode(p)) == p
