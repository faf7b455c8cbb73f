from __future__ import annotations

import itertools
import math

import networkx as nx
import numpy as np
import pytest
from conftest import complete, path, random_graph, random_system, triangle
from hypothesis import given, settings
from hypothesis import strategies as st

from lipcover.instances import SetSystem, WeightedGraph
from lipcover.metrics import (CycleOverflowError, InfeasibleError, OracleSizeError, WeightedOutput,
                              brute_opt, brute_opt_fvs, brute_opt_set_cover, brute_opt_vertex_cover,
                              count_cycle_induced_subsets, cycle_girths, distance_batch, empirical_em,
                              enumerate_simple_cycles, expected_distance, feasible_batch, is_feasible,
                              weighted_distance)


def out(sel, w):
    return WeightedOutput(frozenset(sel), tuple(w))


# ---------------------------------------------------------------- distances

def test_distance_examples():
    assert weighted_distance(out({0, 1}, (1, 2)), out({0, 1}, (1, 2))) == 0
    assert weighted_distance(out({0}, (1,)), out(set(), (1,))) == 1
    # shared id 1 contributes |2 - 3|, id 0 its old weight 1, id 2 its new weight 4
    assert weighted_distance(out({0, 1}, (1, 2, 9)), out({1, 2}, (1, 3, 4))) == 6


def test_distance_rejects_mismatch():
    with pytest.raises(ValueError):
        weighted_distance(out({0}, (1,)), out({0}, (1, 2)))
    with pytest.raises(ValueError):
        out({3}, (1, 2))


def test_distance_batch_matches_scalar(rng):
    for _ in range(50):
        k = int(rng.integers(1, 8))
        a, b = rng.random((2, k)) < 0.5
        wa, wb = rng.random((2, k))
        ref = weighted_distance(out(np.flatnonzero(a), wa), out(np.flatnonzero(b), wb))
        assert math.isclose(distance_batch(a[None], b[None], wa, wb)[0], ref, rel_tol=1e-12, abs_tol=1e-15)


def test_expected_distance_matches_enumeration(rng):
    # E[d] under shared uniforms U_v, keep iff U_v < p_v; integrate each U_v over the cells cut by p_v, p'_v
    for _ in range(20):
        k = 4
        pa, pb, wa, wb = rng.random((4, k))
        total = 0.0
        for v in range(k):
            lo, hi = sorted((pa[v], pb[v]))
            total += lo * abs(wa[v] - wb[v]) + (hi - lo) * (wa[v] if pa[v] > pb[v] else wb[v])
        assert math.isclose(expected_distance(pa, pb, wa, wb), total, rel_tol=1e-12)


def test_expected_distance_is_mean_of_sampled(rng):
    k = 5
    pa, pb, wa, wb = rng.random((4, k))
    u = rng.random((200_000, k))
    sampled = distance_batch(u < pa, u < pb, wa, wb)
    assert abs(sampled.mean() - expected_distance(pa, pb, wa, wb)) < 4 * sampled.std() / math.sqrt(u.shape[0])


def test_triangle_inequality(rng):
    for _ in range(1000):
        k = int(rng.integers(1, 7))
        outs = [out(np.flatnonzero(rng.random(k) < 0.5), rng.random(k)) for _ in range(3)]
        a, b, c = outs
        assert weighted_distance(a, c) <= weighted_distance(a, b) + weighted_distance(b, c) + 1e-12
        assert weighted_distance(a, b) == weighted_distance(b, a)


def test_empirical_em():
    a = [out({0}, (1, 1)), out({1}, (1, 1))]
    assert empirical_em(a, a) == 0
    assert empirical_em(a[:1], a[1:]) == weighted_distance(a[0], a[1])
    # identity pairing costs (2 + 2) / 2, the crossing costs 0
    b = [out({1}, (1, 1)), out({0}, (1, 1))]
    assert empirical_em(a, b) == 0.0
    with pytest.raises(OracleSizeError):
        empirical_em(a * 33, a * 33)


# ------------------------------------------------------------------ oracles

def _enum_min(k, feasible, w):
    best = math.inf
    for r in range(k + 1):
        for c in itertools.combinations(range(k), r):
            if feasible(c):
                best = min(best, sum(w[i] for i in c))
    return best


def test_vertex_cover_oracle_examples():
    assert brute_opt_vertex_cover(triangle()).opt_value == 2
    empty = WeightedGraph(3, (), (1, 1, 1))
    res = brute_opt_vertex_cover(empty)
    assert res.opt_value == 0 and res.witness == frozenset()
    assert brute_opt_vertex_cover(WeightedGraph(2, ((0, 1),), (3, 5))).opt_value == 3
    with pytest.raises(OracleSizeError):
        brute_opt_vertex_cover(path(25))


def test_set_cover_oracle_examples():
    assert brute_opt_set_cover(SetSystem(3, ((0,), (1,), (2,)), (1, 1, 1))).opt_value == 3
    assert brute_opt_set_cover(SetSystem(2, ((0,), (0, 1)), (1, 2))).opt_value == 2
    with pytest.raises(InfeasibleError):
        brute_opt_set_cover(SetSystem(2, ((0,),), (1,)))


def test_fvs_oracle_examples():
    assert brute_opt_fvs(triangle((1, 2, 3))).opt_value == 1
    assert brute_opt_fvs(path(6)).opt_value == 0
    assert brute_opt_fvs(complete(4)).opt_value == 2


def test_oracles_match_plain_enumeration(rng):
    for _ in range(40):
        g = random_graph(rng, int(rng.integers(2, 8)), float(rng.uniform(0.2, 0.9)))
        w = g.w
        vc = _enum_min(g.n, lambda c: all(a in c or b in c for a, b in g.edges), w)
        assert math.isclose(brute_opt_vertex_cover(g).opt_value, vc, rel_tol=1e-12)

        def acyclic(c):
            h = nx.Graph(list(g.edges))
            h.add_nodes_from(range(g.n))
            h.remove_nodes_from(c)
            return nx.is_forest(h) if h.number_of_nodes() else True

        fv = _enum_min(g.n, acyclic, w)
        assert math.isclose(brute_opt_fvs(g).opt_value, fv, rel_tol=1e-12, abs_tol=1e-12)
        s = random_system(rng, int(rng.integers(1, 7)), int(rng.integers(1, 8)), 3)
        sc = _enum_min(s.m, lambda c: set().union(*(s.sets[i] for i in c)) == set(range(s.n_elements)), s.w)
        assert math.isclose(brute_opt_set_cover(s).opt_value, sc, rel_tol=1e-12)


def test_oracle_witnesses_feasible(rng):
    for _ in range(30):
        g = random_graph(rng, int(rng.integers(3, 9)), 0.5)
        for prob in ("vc", "fvs"):
            res = brute_opt(prob, g)
            assert is_feasible(prob, g, res.witness)
            assert math.isclose(float(g.w[list(res.witness)].sum()), res.opt_value, abs_tol=1e-12)
        s = random_system(rng, 6, 7, 3)
        res = brute_opt("sc", s)
        assert is_feasible("sc", s, res.witness)


# ------------------------------------------------------------------- cycles

def test_cycle_enumeration_examples():
    assert [frozenset(c) for c in enumerate_simple_cycles(triangle())] == [frozenset({0, 1, 2})]
    assert enumerate_simple_cycles(path(5)) == []
    cyc = enumerate_simple_cycles(complete(4))
    assert len(cyc) == 7
    assert sum(len(c) == 3 for c in cyc) == 4
    with pytest.raises(CycleOverflowError):
        enumerate_simple_cycles(complete(7), max_count=10)


def test_cycle_enumeration_matches_networkx(rng):
    for _ in range(60):
        g = random_graph(rng, int(rng.integers(3, 9)), float(rng.uniform(0.2, 0.9)))
        h = nx.Graph(list(g.edges))
        ref = sorted(tuple(sorted(c)) for c in nx.simple_cycles(h) if len(c) >= 3)
        got = sorted(tuple(sorted(c)) for c in enumerate_simple_cycles(g))
        assert got == ref


def test_cycle_induced_subsets_examples():
    assert count_cycle_induced_subsets(triangle(), np.ones(3), range(3), 2.5) == 0
    assert count_cycle_induced_subsets(triangle(), np.ones(3), range(3), math.inf) == 1
    assert count_cycle_induced_subsets(complete(4), np.ones(4), range(4), 3) == 4


def test_cycle_girths_k4():
    assert list(cycle_girths(complete(4), np.ones(4))) == [3, 3, 3, 3]
    assert np.isinf(cycle_girths(path(4), np.ones(4))).all()


# -------------------------------------------------------------- feasibility

def test_feasibility_examples():
    empty = WeightedGraph(3, (), (1, 1, 1))
    assert is_feasible("vc", empty, ()) and is_feasible("fvs", empty, ())
    for prob in ("vc", "fvs"):
        assert not is_feasible(prob, triangle(), ())
        assert is_feasible(prob, triangle(), range(3))
    tri_sets = SetSystem(3, ((0, 1), (1, 2), (0, 2)), (1, 1, 1))
    assert not is_feasible("sc", tri_sets, ())
    assert is_feasible("sc", tri_sets, range(3))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_feasible_batch_matches_scalar(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, 6, 0.5)
    masks = rng.random((8, 6)) < 0.6
    for prob in ("vc", "fvs"):
        ref = [is_feasible(prob, g, np.flatnonzero(m)) for m in masks]
        assert list(feasible_batch(prob, g, masks)) == ref
