from __future__ import annotations

import math

import numpy as np
import pytest
from conftest import random_system
from scipy import stats

from lipcover.instances import SetSystem
from lipcover.metrics import InfeasibleError, brute_opt_set_cover, is_set_cover
from lipcover.set_cover_lp import (LPSetCoverConfig, keep_probabilities, log_n, lp_based_set_cover,
                                   lp_based_set_cover_batch, lp_solutions_batch, rounding_sc, rounding_sc_batch)
from lipcover.shared_randomness import RandomTape, batch_sample_ratio, ratio_tv

SEEDS = np.arange(20_000)


def test_config():
    s = SetSystem(4, ((0, 1), (2, 3), (0, 2)), (1.0, 2.0, 3.0))
    cfg = LPSetCoverConfig(0.5)
    assert math.isclose(cfg.lower(s, s.w), 0.5 * 6 / (3 * 3 * math.log(4)))
    assert math.isclose(cfg.kappa(s), 0.5 / (3 * math.log(4)))
    assert cfg.rounds(s) == math.ceil(3 * math.log(4))
    assert log_n(1) == 1.0 and log_n(2) == 1.0
    for bad in (dict(eps=0.0), dict(eps=1.0, C=0.0)):
        with pytest.raises(ValueError):
            LPSetCoverConfig(**bad)


def test_rounding_examples():
    s = SetSystem(2, ((0,), (1,), (0, 1)), (1.0, 1.0, 1.0))
    assert rounding_sc(s, [1.0, 1.0, 1.0], 3, RandomTape(0)) == frozenset({0, 1, 2})
    assert not rounding_sc_batch(s, [0.0, 0.3, 0.7], 5, SEEDS[:2000])[:, 0].any()
    assert rounding_sc(s, [1.0, 1.0, 1.0], 0, RandomTape(0)) == frozenset()


def test_rounding_infeasibility_rate():
    s = SetSystem(1, ((0,), (0,)), (1.0, 1.0))
    seeds = np.arange(1_000_000)
    sel = rounding_sc_batch(s, [0.5, 0.5], 10, seeds, chunk=1 << 17)
    assert (~sel.any(axis=1)).mean() <= math.exp(-10)


def test_rounding_batch_matches_scalar(rng):
    s = random_system(rng, 6, 8, 3)
    x = rng.random((30, s.m))
    batch = rounding_sc_batch(s, x, 4, np.arange(30))
    for i in range(30):
        assert rounding_sc(s, x[i], 4, RandomTape(i)) == frozenset(np.flatnonzero(batch[i]))


def test_keep_probabilities_match_sampled(rng):
    x = np.array([0.0, 0.1, 0.5, 0.9, 1.0])
    K = 4
    s = SetSystem(1, tuple((0,) for _ in x), tuple(np.ones(x.size)))
    freq = rounding_sc_batch(s, x, K, SEEDS).mean(axis=0)
    P = keep_probabilities(x, K)
    assert np.allclose(P, 1 - (1 - x) ** K)
    assert (np.abs(freq - P) <= 4 * np.sqrt(P * (1 - P) / SEEDS.size) + 1e-12).all()
    assert (keep_probabilities(x, 0) == 0).all()


def test_zero_weight_returns_family():
    s = SetSystem(2, ((0,), (1,), (0, 1)), (0.0, 0.0, 0.0))
    assert lp_based_set_cover(s, None, 0.5, RandomTape(0)) == frozenset({0, 1, 2})
    assert lp_based_set_cover_batch(s, s.w, 0.5, SEEDS[:10]).all()


def test_single_set_forced():
    s = SetSystem(3, ((0, 1, 2),), (2.0,))
    assert lp_based_set_cover_batch(s, s.w, 0.5, SEEDS[:200]).all()


def test_infeasible():
    with pytest.raises(InfeasibleError):
        lp_based_set_cover(SetSystem(2, ((0,),), (1.0,)), None, 0.5, RandomTape(0))


def test_lambda_marginal_uniform():
    s = SetSystem(4, ((0, 1), (2, 3), (1, 2), (0, 3)), (1.0, 2.0, 1.5, 0.5))
    tel: dict = {}
    lp_solutions_batch(s, s.w, 0.5, SEEDS[:2000], telemetry=tel)
    L = LPSetCoverConfig(0.5).lower(s, s.w)
    lam = tel["lambda"]
    assert ((lam >= L) & (lam < 2 * L)).all()
    assert stats.kstest(lam, "uniform", args=(L, L)).pvalue > 0.01
    assert tel["max_certified_gap"] >= 0


def test_lambda_coupling():
    s = SetSystem(4, ((0, 1), (2, 3), (1, 2), (0, 3)), (1.0, 2.0, 1.5, 0.5))
    delta = 0.02
    w2 = s.w.copy()
    w2[1] += delta
    cfg = LPSetCoverConfig(0.5)
    a: dict = {}
    lp_solutions_batch(s, s.w, 0.5, SEEDS[:500], telemetry=a)
    assert (a["lambda"] == batch_sample_ratio(cfg.lower(s, s.w), 2.0, SEEDS[:500], "lpsc/lambda")).all()
    lam, lam2 = (batch_sample_ratio(cfg.lower(s, v), 2.0, SEEDS, "lpsc/lambda") for v in (s.w, w2))
    rate = float((lam != lam2).mean())
    tv = ratio_tv(cfg.lower(s, s.w), cfg.lower(s, w2), 2.0)
    assert math.isclose(tv, 2 * delta / w2.sum(), rel_tol=1e-9)
    assert rate <= 8 * tv


def test_batch_matches_scalar(rng):
    s = random_system(rng, 6, 8, 3)
    seeds = np.arange(12)
    xs = lp_solutions_batch(s, s.w, 0.5, seeds)
    batch = rounding_sc_batch(s, xs, LPSetCoverConfig(0.5).rounds(s), seeds)
    for i in seeds:
        assert lp_based_set_cover(s, None, 0.5, RandomTape(int(i))) == frozenset(np.flatnonzero(batch[i]))
    states: list = []
    lp_solutions_batch(s, s.w, 0.5, seeds, states=states)
    again = lp_solutions_batch(s, s.w * 1.001, 0.5, seeds, start=states)
    assert np.abs(again - xs).max() < 0.05


def test_feasibility_and_cost(rng):
    eps = 0.5
    for _ in range(3):
        s = random_system(rng, 8, 10, 3)
        sel = lp_based_set_cover_batch(s, s.w, eps, np.arange(1500))
        assert np.mean([is_set_cover(s, np.flatnonzero(r)) for r in sel]) >= 1 - 1 / s.n_elements
        opt = brute_opt_set_cover(s).opt_value
        cost = sel @ s.w
        K = LPSetCoverConfig(eps).rounds(s)
        # K passes of an x whose linear part is within lam m / 2 + kappa ||w|| / 2 of the LP optimum
        assert cost.mean() <= K * opt + 2 * eps * s.w.sum() + 3 * cost.std() / math.sqrt(cost.size)
