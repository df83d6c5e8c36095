from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from treefpp import core
from treefpp.engine import evaluate
from treefpp.finite_type import coset_type, iterated_wreath, named_perm_group
from treefpp.fpp import (CHUNK, FppError, conditional_fixation, cylinder_independence_check,
                         default_gap, fpp_exact, fpp_finite_type_recursion, fpp_mc, fpp_report,
                         haar_samples, lazy_walk_samples, sample_finite_type, wilson_interval,
                         xn_distribution)
from treefpp.quotient import enumerate_quotient

W2 = iterated_wreath(named_perm_group("sym2")[1], 2, "wreath:sym2")
COSET = coset_type(named_perm_group("alt3")[1], named_perm_group("sym3")[1], 3, "coset:alt3-sym3")


def brute_fpp_full_binary(n):
    """FPP over every portrait of the depth-n binary tree."""
    labels = [(0, 1), (1, 0)]
    hits = total = 0
    for choice in itertools.product(labels, repeat=core.num_internal(2, n)):
        p = core.Portrait(2, n, choice)
        total += 1
        hits += any(core.apply(p, v) == v for v in core.level_vertices(2, n))
    return Fraction(hits, total)


def naive_recursion(perms, n):
    p = Fraction(1)
    for _ in range(n):
        p = sum(1 - (1 - p) ** core.perm_fixed_points(t) for t in perms) / len(perms)
    return p


def tv_distance(rows, support_size):
    _, counts = np.unique(core.as_void(np.ascontiguousarray(rows)), return_counts=True)
    freq = counts / counts.sum()
    missing = support_size - counts.size
    return 0.5 * (np.abs(freq - 1 / support_size).sum() + missing / support_size)


def test_wreath_exact_values():
    assert fpp_exact(W2, 1) == Fraction(1, 2)
    assert fpp_exact(W2, 3) == Fraction(39, 128) == brute_fpp_full_binary(3)


def test_trivial_quotient_has_fpp_one(grigorchuk):
    assert fpp_exact(grigorchuk, 0) == 1


def test_recursion_matches_brute_force():
    rec = fpp_finite_type_recursion(W2, 4)
    for n in range(1, 5):
        assert rec[n].exact
        assert rec[n].lower == fpp_exact(W2, n) == naive_recursion([(0, 1), (1, 0)], n)
    assert rec[3].lower == brute_fpp_full_binary(3)


def test_coset_recursion_channels():
    rec = fpp_finite_type_recursion(COSET, 6)
    assert rec[1].lower == Fraction(2, 3)
    assert rec[2].lower == (Fraction(19, 81) + 1) / 2
    assert rec[2].lower == fpp_exact(COSET, 2)
    odd = [ch for ch in rec.channels if ch[0].lower == 1]
    even = [ch for ch in rec.channels if ch[0].lower != 1]
    assert len(odd) == len(even) == 1
    assert all(q.lower == 1 for q in odd[0])
    assert even[0][0].lower == Fraction(1, 3) and even[0][1].lower == Fraction(19, 81)


def test_recursion_enclosures_are_certified():
    rec = fpp_finite_type_recursion(COSET, 12, exact_bits=64, precision=80)
    exact = fpp_finite_type_recursion(COSET, 12, exact_bits=10**6)
    for n in range(1, 13):
        assert rec[n].lower <= exact[n].lower <= rec[n].upper
    assert not rec[12].exact


def test_coset_limit_half():
    rec = fpp_finite_type_recursion(COSET, 100)
    assert abs(float(rec[100]) - 0.5) <= 0.02
    assert rec[100].upper - rec[100].lower < Fraction(1, 10**100)


def test_direct_sampler_uniform_on_wreath():
    rows = haar_samples(W2, 2, 80000, seed=7)
    assert tv_distance(rows, 8) <= 0.02


def test_coset_sampler_properties():
    rows = haar_samples(COSET, 1, 60000, seed=3)
    assert tv_distance(rows, 6) <= 0.02
    even = {s for s in itertools.permutations(range(3)) if core.perm_fixed_points(s) != 1}
    for seed in range(40):
        p = sample_finite_type(COSET, 2, seed)
        parity = {tuple(int(x) for x in row) in even for row in p.labels}
        assert len(parity) == 1


def exact_walk_law(G, n, steps):
    """Distribution of the lazy walk after ``steps`` steps, by matrix powers on pi_n."""
    Q = enumerate_quotient(G, n)
    gens = [evaluate(G, g, n) for g in G.names]
    gens += [core.invert(g) for g in gens]
    P = np.zeros((Q.order, Q.order))
    for i, p in enumerate(Q.portraits()):
        P[i, i] += 0.5
        for g in gens:
            P[i, Q.index_of(core.compose(g, p))] += 0.5 / len(gens)
    mu = np.zeros(Q.order)
    mu[Q.identity_index] = 1.0
    return Q, mu @ np.linalg.matrix_power(P, steps)


def test_lazy_walk_matches_exact_chain(grigorchuk):
    Q, law = exact_walk_law(grigorchuk, 3, 64)
    rows = lazy_walk_samples(grigorchuk, 3, 50000, 64, seed=42)
    idx = Q.index_of_codes(core.codes_from_leaves(2, 3, rows))
    freq = np.bincount(idx, minlength=Q.order) / idx.size
    assert 0.5 * np.abs(freq - law).sum() <= 0.03
    fixing = Q.fixed_counts() > 0
    est = fpp_mc(grigorchuk, 3, 50000, seed=42, walk_length=64)
    assert abs(est.estimate - law[fixing].sum()) <= 3 * est.stderr


def test_lazy_walk_mixes_with_longer_walks(grigorchuk):
    rows = lazy_walk_samples(grigorchuk, 3, 50000, 256, seed=42)
    assert tv_distance(rows, 128) <= 0.05
    est = fpp_mc(grigorchuk, 3, 50000, seed=42, walk_length=256)
    assert abs(est.estimate - float(fpp_exact(grigorchuk, 3))) <= 3 * est.stderr


@pytest.mark.xfail(strict=True, reason="exact walk law at 64 steps is 0.165 from uniform; second eigenvalue 0.975")
def test_lazy_walk_64_steps_within_tv_bound(grigorchuk):
    rows = lazy_walk_samples(grigorchuk, 3, 50000, 64, seed=42)
    assert tv_distance(rows, 128) <= 0.05


@pytest.mark.xfail(strict=True, reason="64 steps leave a bias of 0.029 in the fixing probability")
def test_mc_64_steps_within_three_sigma(grigorchuk):
    exact = fpp_exact(grigorchuk, 3)
    est = fpp_mc(grigorchuk, 3, 50000, seed=42, walk_length=64)
    assert abs(est.estimate - float(exact)) <= 3 * est.stderr


def test_mc_degenerate_walk(grigorchuk):
    assert fpp_mc(grigorchuk, 3, 100, seed=1, walk_length=0).estimate == 1.0


def test_mc_determinism(grigorchuk):
    samples = 2 * CHUNK + 17
    a = fpp_mc(grigorchuk, 4, samples, seed=5, walk_length=32, threads=1)
    b = fpp_mc(grigorchuk, 4, samples, seed=5, walk_length=32, threads=4)
    c = fpp_mc(grigorchuk, 4, samples, seed=6, walk_length=32)
    assert a == b
    assert a.hits != c.hits or a.estimate == c.estimate
    assert np.array_equal(haar_samples(COSET, 3, samples, 9, threads=1),
                          haar_samples(COSET, 3, samples, 9, threads=3))


def test_xn_examples(grigorchuk):
    h = xn_distribution(W2, 1)
    assert h.frequencies() == {0: Fraction(1, 2), 2: Fraction(1, 2)}
    trivial = xn_distribution(grigorchuk, 0)
    assert trivial.frequencies() == {1: 1}
    h2 = xn_distribution(grigorchuk, 2)
    assert h2.total == 8 and sum(h2.frequencies().values()) == 1
    assert set(h2.counts) <= set(range(5))
    mc = xn_distribution(grigorchuk, 3, mode="mc", samples=5000, seed=2)
    assert abs(sum(mc.frequencies().values()) - 1) < 1e-12
    with pytest.raises(FppError):
        xn_distribution(grigorchuk, 2, mode="mc")


def test_xn_matches_brute_force(grigorchuk):
    Q = enumerate_quotient(grigorchuk, 3)
    counts = {}
    for p in Q.portraits():
        r = sum(core.apply(p, v) == v for v in core.level_vertices(2, 3))
        counts[r] = counts.get(r, 0) + 1
    assert xn_distribution(grigorchuk, 3).counts == counts


def test_wilson_interval():
    lo, hi = wilson_interval(50, 100)
    assert lo < 0.5 < hi
    assert wilson_interval(0, 10)[0] == 0.0
    assert wilson_interval(10, 10)[1] == 1.0
    assert wilson_interval(0, 0) == (0.0, 1.0)
    lo, hi = wilson_interval(81, 263)
    assert math.isclose(lo, 0.2553, abs_tol=1e-3) and math.isclose(hi, 0.3662, abs_tol=1e-3)


def test_default_gap():
    assert default_gap(2, 1) == 1
    assert default_gap(2, 2) == 2
    assert default_gap(2, 3) == 3
    assert default_gap(3, 9) == 3


def test_conditional_fixation(grigorchuk, exc3):
    res = conditional_fixation(grigorchuk, 2, r=2, m=1)
    assert res.exact and res.bound == Fraction(1, 2) and res.within_bound
    with pytest.raises(FppError, match="no mass"):
        conditional_fixation(grigorchuk, 2, r=1, m=1)
    mc = conditional_fixation(exc3, 2, r=1, m=1, mode="mc", samples=20000, seed=11)
    assert mc.bound == Fraction(5, 6) and mc.within_bound
    full = conditional_fixation(W2, 2, r=4, m=1)
    assert 0 <= full.value <= 1


def test_conditional_matches_brute_force(grigorchuk):
    Q = enumerate_quotient(grigorchuk, 3)
    num = den = 0
    for p in Q.portraits():
        if core.fixed_leaves(core.truncate(p, 2)) == 2:
            den += 1
            num += core.fixed_leaves(p) == 2
    assert conditional_fixation(grigorchuk, 2, r=2, m=1).value == Fraction(num, den)


def test_cylinder_examples(grigorchuk):
    swap = core.Portrait(2, 1, [[1, 0]])
    ident = core.identity_portrait(2, 1)
    res = cylinder_independence_check(grigorchuk, 1, 1, (1,), [swap], [ident])
    assert res.lhs == res.rhs == Fraction(1, 4) and res.equal
    P1 = enumerate_quotient(grigorchuk, 1).portraits()
    assert cylinder_independence_check(grigorchuk, 1, 1, (2,), P1, P1).lhs == 1
    empty = cylinder_independence_check(grigorchuk, 1, 1, (2,), [], P1)
    assert empty.lhs == empty.rhs == 0


def test_cylinder_brute_force(grigorchuk):
    Q2 = enumerate_quotient(grigorchuk, 2).portraits()
    swap = core.Portrait(2, 1, [[1, 0]])
    count = sum(1 for p in Q2 if core.truncate(p, 1) == swap and core.is_identity(core.section(p, (1,))))
    assert Fraction(count, len(Q2)) == Fraction(1, 4)


@settings(max_examples=30, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.sampled_from(["grigorchuk", "ggs3", "exc3"]), st.integers(1, 2), st.integers(1, 2), st.data())
def test_cylinder_independence_holds(name, n, m, data):
    from treefpp.zoo import build_zoo_group
    key = {"grigorchuk": "grigorchuk", "ggs3": "ggs:p=3,alpha=1.2", "exc3": "exceptional:d=3"}[name]
    G = build_zoo_group(key).group
    if G.degree == 3:
        n, m = 1, 1
    d = G.degree
    Qn, Qm = enumerate_quotient(G, n), enumerate_quotient(G, m)
    a = data.draw(st.lists(st.integers(0, Qn.order - 1), max_size=6, unique=True))
    b = data.draw(st.lists(st.integers(0, Qm.order - 1), max_size=6, unique=True))
    v = tuple(data.draw(st.lists(st.integers(1, d), min_size=n, max_size=n)))
    res = cylinder_independence_check(G, n, m, v, Qn.codes[a], Qm.codes[b])
    assert res.equal


@pytest.mark.parametrize("key", ["grigorchuk", "exceptional:d=3"])
def test_epsilon_bound(key):
    from treefpp.zoo import build_zoo_group
    G = build_zoo_group(key).group
    d = G.degree
    for n in (1, 2):
        for r in range(1, d**n + 1):
            m = default_gap(d, r)
            if n + m > (4 if d == 2 else 2):
                continue
            try:
                res = conditional_fixation(G, n, r)
            except FppError:
                continue
            assert res.within_bound, (n, r, res)


def test_exact_series_monotone(grigorchuk, chebyshev, exc3, basilica):
    for G, top in ((grigorchuk, 4), (chebyshev, 8), (exc3, 2), (basilica, 4)):
        vals = [fpp_exact(G, n) for n in range(1, top + 1)]
        assert all(b <= a for a, b in zip(vals, vals[1:]))


def test_exceptional_first_levels(exc3):
    assert fpp_exact(exc3, 1) == Fraction(2, 3)
    assert fpp_exact(exc3, 2) < fpp_exact(exc3, 1)


def test_chebyshev_series(chebyshev):
    s = fpp_report(chebyshev, 8, mode="exact")
    assert s.non_increasing()
    assert s.exact_values()[:3] == [Fraction(1, 2), Fraction(3, 8), Fraction(5, 16)]


def test_report_modes(grigorchuk):
    auto = fpp_report(grigorchuk, 4, mode="auto", element_limit=200, seed=3, samples=3000)
    assert [e.provenance for e in auto.entries] == ["exact", "exact", "exact", "mc"]
    with pytest.raises(FppError):
        fpp_report(grigorchuk, 4, mode="auto", element_limit=200)
    with pytest.raises(FppError):
        fpp_report(grigorchuk, 2, mode="recursion")
    rec = fpp_report(COSET, 5, mode="recursion")
    assert [e.provenance for e in rec.entries] == ["recursion"] * 5
    assert rec.non_increasing()


def test_evaluation_of_generators_consistent_with_quotient(grigorchuk):
    Q = enumerate_quotient(grigorchuk, 2)
    assert evaluate(grigorchuk, "a", 2) in Q
