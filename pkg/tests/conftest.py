from __future__ import annotations

import itertools

import numpy as np
import pytest

from lipcover.instances import SetSystem, WeightedGraph

# criterion id -> (passed, detail), filled by test_acceptance.py
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k[2:])):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{key} {'PASS' if ok else 'FAIL'}  {detail}")


def triangle(w=(1.0, 1.0, 1.0)) -> WeightedGraph:
    return WeightedGraph(3, ((0, 1), (1, 2), (0, 2)), tuple(w))


def complete(n: int, w=None) -> WeightedGraph:
    edges = tuple(itertools.combinations(range(n), 2))
    return WeightedGraph(n, edges, tuple(w) if w is not None else (1.0,) * n)


def path(n: int, w=None) -> WeightedGraph:
    return WeightedGraph(n, tuple((i, i + 1) for i in range(n - 1)),
                         tuple(w) if w is not None else (1.0,) * n)


def random_graph(rng: np.random.Generator, n: int, p: float, wmax: float = 10.0) -> WeightedGraph:
    edges = tuple((i, j) for i, j in itertools.combinations(range(n), 2) if rng.random() < p)
    return WeightedGraph(n, edges, tuple(rng.uniform(0.5, wmax, n)))


def random_system(rng: np.random.Generator, n: int, m: int, s: int) -> SetSystem:
    """Feasible system: a cover by random chunks plus random extra sets."""
    perm = rng.permutation(n)
    sets = []
    i = 0
    while i < n:
        k = int(rng.integers(1, s + 1))
        sets.append(tuple(sorted(int(e) for e in perm[i: i + k])))
        i += k
    while len(sets) < m:
        k = int(rng.integers(1, min(s, n) + 1))
        sets.append(tuple(sorted(int(e) for e in rng.choice(n, k, replace=False))))
    return SetSystem(n, tuple(sets), tuple(rng.uniform(0.5, 10.0, len(sets))))


@pytest.fixture
def rng():
    return np.random.default_rng(20240531)
