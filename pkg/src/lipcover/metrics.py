"""Output distances, exact oracles and feasibility checks."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .instances import SetSystem, WeightedGraph

MAX_EM_SAMPLES = 64
MAX_VC_ORACLE = 24
MAX_SC_ORACLE = 24
MAX_FVS_ORACLE = 20


class OracleSizeError(ValueError):
    pass


class InfeasibleError(ValueError):
    pass


class CycleOverflowError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# distances
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class WeightedOutput:
    """A selected id set together with the weight vector it was produced under."""

    selected: frozenset
    weights: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "selected", frozenset(int(i) for i in self.selected))
        object.__setattr__(self, "weights", tuple(float(x) for x in self.weights))
        bad = [i for i in self.selected if not 0 <= i < len(self.weights)]
        if bad:
            raise ValueError(f"selected ids {sorted(bad)} outside [0, {len(self.weights)})")


def weighted_distance(a: WeightedOutput, b: WeightedOutput) -> float:
    """Distance between two weighted outputs.

    Shared ids contribute ``|w_v - w'_v|``; ids selected on one side only
    contribute their weight on that side.
    """
    if len(a.weights) != len(b.weights):
        raise ValueError(f"dimension mismatch: {len(a.weights)} vs {len(b.weights)}")
    wa, wb = a.weights, b.weights
    # exact summation keeps the distance symmetric to the last bit
    return math.fsum([abs(wa[v] - wb[v]) for v in a.selected & b.selected]
                     + [wa[v] for v in a.selected - b.selected]
                     + [wb[v] for v in b.selected - a.selected])


def distance_batch(sel_a: np.ndarray, sel_b: np.ndarray, w_a, w_b) -> np.ndarray:
    """Row-wise weighted distance between boolean selection matrices."""
    sel_a = np.asarray(sel_a, dtype=bool)
    sel_b = np.asarray(sel_b, dtype=bool)
    w_a = np.asarray(w_a, dtype=float)
    w_b = np.asarray(w_b, dtype=float)
    both = sel_a & sel_b
    return (both * np.abs(w_a - w_b)).sum(-1) + ((sel_a & ~sel_b) * w_a).sum(-1) + ((sel_b & ~sel_a) * w_b).sum(-1)


def expected_distance(p_a: np.ndarray, p_b: np.ndarray, w_a, w_b) -> np.ndarray:
    """Row-wise ``E[d_w]`` when coordinate ``v`` is kept iff ``U_v < p_v`` on both sides.

    The ``U_v`` are independent uniforms shared by the two runs, so ``v``
    lies in both outputs with probability ``min(p_a, p_b)`` and in exactly
    one with probability ``|p_a - p_b|``.
    """
    p_a = np.asarray(p_a, dtype=float)
    p_b = np.asarray(p_b, dtype=float)
    w_a = np.asarray(w_a, dtype=float)
    w_b = np.asarray(w_b, dtype=float)
    both = np.minimum(p_a, p_b)
    return (both * np.abs(w_a - w_b)).sum(-1) + ((p_a - both) * w_a).sum(-1) + ((p_b - both) * w_b).sum(-1)


def empirical_em(samples_a: Sequence[WeightedOutput], samples_b: Sequence[WeightedOutput]) -> float:
    """Earth mover's distance between two equal-size empirical output distributions.

    Solved exactly as a min-cost perfect matching; refuses ``N > 64``.
    """
    n = len(samples_a)
    if n != len(samples_b):
        raise ValueError(f"sample counts differ: {n} vs {len(samples_b)}")
    if n > MAX_EM_SAMPLES:
        raise OracleSizeError(f"empirical_em supports at most {MAX_EM_SAMPLES} samples, got {n}")
    if n == 0:
        return 0.0
    cost = np.array([[weighted_distance(a, b) for b in samples_b] for a in samples_a])
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].sum() / n)


# --------------------------------------------------------------------------
# feasibility
# --------------------------------------------------------------------------

def is_vertex_cover(g: WeightedGraph, cand: Iterable[int]) -> bool:
    c = set(cand)
    return all(u in c or v in c for u, v in g.edges)


def is_set_cover(sys: SetSystem, cand: Iterable[int]) -> bool:
    covered = set()
    for j in cand:
        covered.update(sys.sets[j])
    return len(covered) == sys.n_elements


def is_forest(n: int, edges: Iterable[tuple[int, int]], removed: Iterable[int] = ()) -> bool:
    """Union-find acyclicity test of the graph minus ``removed`` vertices."""
    gone = set(removed)
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for u, v in edges:
        if u in gone or v in gone:
            continue
        ru, rv = find(u), find(v)
        if ru == rv:
            return False
        parent[ru] = rv
    return True


def is_feedback_vertex_set(g: WeightedGraph, cand: Iterable[int]) -> bool:
    return is_forest(g.n, g.edges, cand)


def is_feasible(problem: str, instance, cand: Iterable[int]) -> bool:
    """``problem`` is one of ``"vc"``, ``"sc"``, ``"fvs"``."""
    if problem == "vc":
        return is_vertex_cover(instance, cand)
    if problem == "sc":
        return is_set_cover(instance, cand)
    if problem == "fvs":
        return is_feedback_vertex_set(instance, cand)
    raise ValueError(f"unknown problem {problem!r}")


def feasible_batch(problem: str, instance, masks: np.ndarray) -> np.ndarray:
    """Feasibility of every row of a boolean selection matrix."""
    masks = np.asarray(masks, dtype=bool)
    if problem == "vc":
        e = instance.edge_array
        if e.size == 0:
            return np.ones(masks.shape[0], dtype=bool)
        return (masks[:, e[:, 0]] | masks[:, e[:, 1]]).all(axis=1)
    if problem == "sc":
        A = instance.incidence
        return ((masks.astype(float) @ A.T) > 0.5).all(axis=1)
    if problem == "fvs":
        return np.array([is_forest(instance.n, instance.edges, np.flatnonzero(r)) for r in masks])
    raise ValueError(f"unknown problem {problem!r}")


# --------------------------------------------------------------------------
# exact oracles
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class OracleResult:
    opt_value: float
    witness: frozenset


def brute_opt_vertex_cover(g: WeightedGraph) -> OracleResult:
    """Exact minimum-weight vertex cover by branch and bound (n <= 24).

    Branches on an uncovered edge ``(u, v)``: either ``u`` is in the cover,
    or it is not and then every neighbour of ``u`` is.
    """
    if g.n > MAX_VC_ORACLE:
        raise OracleSizeError(f"vertex-cover oracle supports n <= {MAX_VC_ORACLE}, got {g.n}")
    w = g.weights
    adj = g.adjacency
    best = [math.inf, frozenset()]

    def rec(inside: frozenset, outside: frozenset, weight: float):
        if weight >= best[0]:
            return
        edge = next(((u, v) for u, v in g.edges if u not in inside and v not in inside), None)
        if edge is None:
            best[0], best[1] = weight, inside
            return
        u, v = edge
        if u in outside:
            u, v = v, u
        if u in outside:
            return
        rec(inside | {u}, outside, weight + w[u])
        nb = set(adj[u]) - inside
        if nb & outside:
            return
        rec(inside | nb, outside | {u}, weight + sum(w[x] for x in nb))

    rec(frozenset(), frozenset(), 0.0)
    return OracleResult(float(best[0]), best[1])


def brute_opt_set_cover(sys: SetSystem) -> OracleResult:
    """Exact minimum-weight set cover by branch and bound (|F| <= 24)."""
    if sys.m > MAX_SC_ORACLE:
        raise OracleSizeError(f"set-cover oracle supports at most {MAX_SC_ORACLE} sets, got {sys.m}")
    if not sys.is_coverable():
        missing = [e for e, c in enumerate(sys.frequency) if c == 0]
        raise InfeasibleError(f"elements {missing} are not covered by any set")
    w = sys.weights
    best = [math.inf, frozenset()]

    def rec(chosen: frozenset, banned: frozenset, covered: frozenset, weight: float):
        if weight >= best[0]:
            return
        open_ = [e for e in range(sys.n_elements) if e not in covered]
        if not open_:
            best[0], best[1] = weight, chosen
            return
        # element with the fewest remaining options
        e = min(open_, key=lambda x: sum(1 for j in sys.containing[x] if j not in banned))
        opts = [j for j in sys.containing[e] if j not in banned]
        opts.sort(key=lambda j: w[j])
        tried: set[int] = set()
        for j in opts:
            rec(chosen | {j}, banned | tried, covered | set(sys.sets[j]), weight + w[j])
            tried.add(j)

    rec(frozenset(), frozenset(), frozenset(), 0.0)
    return OracleResult(float(best[0]), best[1])


def _find_cycle(n: int, adj, removed: set) -> list[int] | None:
    """Vertices of some cycle in the graph minus ``removed``; None if acyclic."""
    color = [0] * n
    parent = [-1] * n
    for root in range(n):
        if root in removed or color[root]:
            continue
        stack = [(root, iter(adj[root]))]
        color[root] = 1
        while stack:
            v, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                color[v] = 2
                stack.pop()
                continue
            if nxt in removed or nxt == parent[v]:
                continue
            if color[nxt] == 1:
                cyc = [v]
                x = v
                while x != nxt:
                    x = parent[x]
                    cyc.append(x)
                return cyc
            if color[nxt] == 0:
                color[nxt] = 1
                parent[nxt] = v
                stack.append((nxt, iter(adj[nxt])))
    return None


def brute_opt_fvs(g: WeightedGraph) -> OracleResult:
    """Exact minimum-weight feedback vertex set (n <= 20).

    Branches over the vertices of a cycle of the remaining graph; the i-th
    branch takes the i-th vertex and forbids the earlier ones.
    """
    if g.n > MAX_FVS_ORACLE:
        raise OracleSizeError(f"FVS oracle supports n <= {MAX_FVS_ORACLE}, got {g.n}")
    w = g.weights
    adj = g.adjacency
    best = [math.inf, frozenset()]

    def rec(chosen: frozenset, banned: frozenset, weight: float):
        if weight >= best[0]:
            return
        cyc = _find_cycle(g.n, adj, set(chosen))
        if cyc is None:
            best[0], best[1] = weight, chosen
            return
        tried: set[int] = set()
        for v in sorted(cyc, key=lambda x: w[x]):
            if v in banned:
                continue
            rec(chosen | {v}, banned | tried, weight + w[v])
            tried.add(v)

    rec(frozenset(), frozenset(), 0.0)
    return OracleResult(float(best[0]), best[1])


def brute_opt(problem: str, instance) -> OracleResult:
    if problem == "vc":
        return brute_opt_vertex_cover(instance)
    if problem == "sc":
        return brute_opt_set_cover(instance)
    if problem == "fvs":
        return brute_opt_fvs(instance)
    raise ValueError(f"unknown problem {problem!r}")


# --------------------------------------------------------------------------
# cycles
# --------------------------------------------------------------------------

def enumerate_simple_cycles(g: WeightedGraph, max_count: int = 1_000_000) -> list[tuple[int, ...]]:
    """All simple cycles of length >= 3, each once.

    A cycle is reported as a vertex sequence starting at its smallest vertex,
    oriented so that the second vertex is smaller than the last. Distinct
    cycles may share a vertex set (K4 has three 4-cycles on one set).
    """
    adj = g.adjacency
    out: list[tuple[int, ...]] = []
    for s in range(g.n):
        path = [s]
        on_path = {s}
        stack = [iter(x for x in adj[s] if x > s)]
        while stack:
            nxt = next(stack[-1], None)
            if nxt is None:
                stack.pop()
                on_path.discard(path.pop())
                continue
            for x in adj[nxt]:
                if x == s and len(path) >= 2 and path[1] < nxt:
                    out.append(tuple(path) + (nxt,))
                    if len(out) > max_count:
                        raise CycleOverflowError(f"more than {max_count} simple cycles")
            path.append(nxt)
            on_path.add(nxt)
            stack.append(iter(x for x in adj[nxt] if x > s and x not in on_path))
    return out


def count_cycle_induced_subsets(g: WeightedGraph, z, S: Iterable[int], bound: float,
                                max_count: int = 1_000_000) -> int:
    """Number of distinct traces ``C & S`` over simple cycles with ``z(C) <= bound``."""
    z = np.asarray(z, dtype=float)
    S = frozenset(S)
    traces = set()
    for c in enumerate_simple_cycles(g, max_count):
        if float(z[list(c)].sum()) <= bound:
            traces.add(S.intersection(c))
    return len(traces)


def cycle_girths(g: WeightedGraph, z, cycles: list[tuple[int, ...]] | None = None) -> np.ndarray:
    """Per-vertex minimum cycle weight by enumeration (inf off cycles)."""
    z = np.asarray(z, dtype=float)
    if cycles is None:
        cycles = enumerate_simple_cycles(g)
    out = np.full(g.n, math.inf)
    for c in cycles:
        val = math.fsum(z[list(c)])
        for v in c:
            if val < out[v]:
                out[v] = val
    return out
