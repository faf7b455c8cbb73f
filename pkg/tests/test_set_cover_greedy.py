from __future__ import annotations

import functools
import math

import numpy as np
import pytest
from conftest import random_system
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from lipcover.instances import SetSystem
from lipcover.metrics import is_set_cover
from lipcover.set_cover_greedy import (NEG_INF, BudgetError, GreedyParams, build_queue, compare_x,
                                       compute_index, encode, exact_key, harmonic, hash_rate, is_hashed,
                                       level, lipschitz_greedy, lipschitz_greedy_batch, tie_priority)
from lipcover.shared_randomness import RandomTape


def test_compute_index_examples():
    assert compute_index(0.0, 0.3, 2, 3) == NEG_INF
    assert compute_index(2.0 ** (1 * 0.25), 0.25, 2, 1) == 0
    assert compute_index(5.0, 0.0, 2, 3) == 6
    with pytest.raises(ValueError):
        compute_index(1.0, 0.0, 1, 3)


def test_compute_index_definition(rng):
    for _ in range(500):
        s, M, K = int(rng.integers(2, 6)), int(rng.integers(1, 8)), int(rng.integers(1, 5))
        w, b = float(rng.uniform(0.01, 1000)), float(rng.random())
        i = compute_index(w, b, s, M, K)
        assert s ** (K * b + i / M) <= w * (1 + 1e-9)
        assert w < s ** (K * b + (i + 1) / M) * (1 + 1e-9)


def test_params_from_epsilon():
    p = GreedyParams.from_epsilon(1.0, 3)
    h = harmonic(3)
    assert p.K == math.ceil(4 * h) * 2
    assert p.M == math.ceil(4 * h * math.log2(3))
    with pytest.raises(ValueError):
        GreedyParams(0, 1)


def _float_x(i, a, s, M):
    return -math.inf if i == NEG_INF else i - M * math.log(a) / math.log(s)


def test_exact_order_agrees_with_float(rng):
    # random tuple sets: the exact comparator and exact keys agree with each other,
    # and with floating x wherever floats separate the values clearly
    for _ in range(10_000):
        s, M = int(rng.integers(2, 5)), int(rng.integers(1, 6))
        i1, i2 = (int(v) for v in rng.integers(-5, 6, 2))
        a1, a2 = (int(v) for v in rng.integers(1, s + 1, 2))
        c = compare_x(i1, a1, i2, a2, s, M)
        k1, k2 = exact_key(i1, a1, s, M), exact_key(i2, a2, s, M)
        assert c == (k1 > k2) - (k1 < k2)
        f1, f2 = _float_x(i1, a1, s, M), _float_x(i2, a2, s, M)
        if abs(f1 - f2) > 1e-9:
            assert c == (f1 > f2) - (f1 < f2)


def test_exact_ties_detected():
    # s = 4, M = 2: 2 log_4 2 = 1, so (i=3, |A|=2) ties (i=2, |A|=1) exactly
    assert compare_x(3, 2, 2, 1, 4, 2) == 0
    assert compare_x(NEG_INF, 1, -100, 1, 2, 1) == -1


def test_level_monotonicity(rng):
    for _ in range(2000):
        s, M, K = int(rng.integers(2, 5)), int(rng.integers(1, 5)), int(rng.integers(1, 4))
        i1, i2 = (int(v) for v in rng.integers(-20, 20, 2))
        a1, a2 = (int(v) for v in rng.integers(1, s + 1, 2))
        admissible = all(i % (K * M) >= math.ceil(M * math.log(a, s) - 1e-12) for i, a in ((i1, a1), (i2, a2)))
        if admissible and level(i1, K, M) < level(i2, K, M):
            assert compare_x(i1, a1, i2, a2, s, M) < 0


def test_build_queue_examples():
    p = GreedyParams(1, 1)
    single = SetSystem(2, ((0,), (0, 1)), (1.0, 1.0))
    q = build_queue(single, single.w, p, 0.0)
    assert [(t.A, t.S) for t in q if t.S == 0] == [((0,), 0)]
    # s = 2, K = M = 1: every index is 0 mod 1 < log_2 2 = 1, so the pair set is hashed
    assert sorted(t.A for t in q if t.S == 1) == [(0,), (1,)]
    assert is_hashed(0, 2, 2, 1, 1)
    zero = SetSystem(2, ((0, 1),), (0.0,))
    assert sorted(t.A for t in build_queue(zero, zero.w, p, 0.0)) == [(0,), (0, 1), (1,)]


def test_greedy_examples():
    p = GreedyParams(4, 2)
    one = SetSystem(3, ((0, 1, 2), (0,), (1,)), (1.0, 5.0, 5.0))
    sel = lipschitz_greedy(one, None, p, RandomTape(0))
    assert 0 in sel
    zero = SetSystem(3, ((0, 1, 2), (0,), (1,), (2,)), (0.0, 1.0, 1.0, 1.0))
    assert (lipschitz_greedy_batch(zero, zero.w, p, np.arange(100)) == [True, False, False, False]).all()
    disjoint = SetSystem(3, ((0,), (1,), (2,), (0, 1)), (1.0, 2.0, 3.0, 50.0))
    assert lipschitz_greedy(disjoint, None, GreedyParams(1, 1), RandomTape(1)) >= frozenset({2})
    singles = SetSystem(3, ((0,), (1,), (2,)), (1.0, 2.0, 3.0))
    with pytest.raises(ValueError):
        lipschitz_greedy(singles, None, p, RandomTape(1))


def test_singleton_instance_is_forced():
    s = SetSystem(4, ((0,), (1,), (2,), (3,), (0, 1)), (1.0, 2.0, 3.0, 4.0, 100.0))
    sel = lipschitz_greedy_batch(s, s.w, GreedyParams(2, 2), np.arange(200))
    assert (sel[:, :4]).all() and not sel[:, 4].any()


def test_budget_guard():
    big = SetSystem(12, (tuple(range(12)),), (1.0,))
    with pytest.raises(BudgetError):
        lipschitz_greedy(big, None, GreedyParams(1, 1), RandomTape(0), budget=1000)


def _reference(sys, w, params, tape):
    """Direct transcription: sort admissible tuples by exact x, then priority of A, then of (A, S)."""
    b = tape.uniform("lg/b")
    q = build_queue(sys, w, params, b)
    s, M = sys.s, params.M

    def cmp(t1, t2):
        c = compare_x(t1.i, len(t1.A), t2.i, len(t2.A), s, M)
        if c:
            return c
        k1 = (tie_priority(t1.A, tape), tape.uniform(f"lg/pi/A={encode(t1.A)}/S={t1.S}"))
        k2 = (tie_priority(t2.A, tape), tape.uniform(f"lg/pi/A={encode(t2.A)}/S={t2.S}"))
        return (k1 > k2) - (k1 < k2)

    R = set(range(sys.n_elements))
    out = set()
    for t in sorted(q, key=functools.cmp_to_key(cmp)):
        if set(t.A) <= R:
            out.add(t.S)
            R -= set(t.A)
    return frozenset(out)


def test_batch_matches_reference(rng):
    for trial in range(15):
        sys_ = random_system(rng, int(rng.integers(2, 8)), int(rng.integers(2, 9)), 3)
        if sys_.s < 2:
            continue
        params = GreedyParams(int(rng.integers(1, 4)), int(rng.integers(1, 4)))
        w = sys_.w * (rng.random(sys_.m) > 0.15)
        batch = lipschitz_greedy_batch(sys_, w, params, np.arange(30))
        for i in range(30):
            ref = _reference(sys_, w, params, RandomTape(i))
            assert ref == frozenset(np.flatnonzero(batch[i]))
            assert lipschitz_greedy(sys_, w, params, RandomTape(i)) == ref


def test_tie_priority_uniform_ranks():
    subsets = [(0,), (1,), (0, 1)]
    counts = np.zeros((3, 3))
    for seed in range(10_000):
        t = RandomTape(seed)
        order = np.argsort([tie_priority(A, t) for A in subsets])
        counts[np.arange(3), np.argsort(order)] += 1
    assert stats.chisquare(counts.ravel(), np.full(9, 10_000 / 3)).pvalue > 0.01
    assert tie_priority((0, 1), RandomTape(3)) == tie_priority((1, 0), RandomTape(3))


def test_hash_rate_bound():
    s = SetSystem(3, ((0, 1, 2), (0,), (1,), (2,)), (3.7, 1.0, 1.0, 1.0))
    p = GreedyParams.from_epsilon(1.0, 3)
    seeds = np.arange(20_000)
    rate = hash_rate(s, s.w, p, 0, seeds)
    assert rate <= 1 / p.K + 3 * math.sqrt((1 / p.K) * (1 - 1 / p.K) / seeds.size)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), eps=st.floats(0.2, 2.0))
def test_always_feasible(seed, eps):
    rng = np.random.default_rng(seed)
    sys_ = random_system(rng, int(rng.integers(2, 9)), int(rng.integers(2, 10)), 4)
    if sys_.s < 2:
        return
    sel = lipschitz_greedy_batch(sys_, sys_.w, None, np.arange(10), eps=eps)
    assert all(is_set_cover(sys_, np.flatnonzero(r)) for r in sel)
