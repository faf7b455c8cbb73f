"""Feedback vertex set through a cycle-constrained regularized LP.

Pipeline: solve the regularized LP over the cycle constraints with a
cutting-plane loop, scale the solution by ``n**2`` with a shared random
offset, and keep the support of a cycle sparsifier of the scaled weights.

Tape keys: ``"fvs/lambda/*"``, ``"fvs/b"``, ``"fvs/sp/v=<id>"``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra
from scipy.stats import binom

from .instances import WeightedGraph
from .lp_core import CoveringProgram, LPSolution, SolverError, solve_regularized
from .set_cover_lp import log_n
from .shared_randomness import RandomTape, batch_sample_ratio, batch_uniform, batch_uniforms, sample_fixed, sample_ratio

SEP_TOL = 1e-6
DEFAULT_C = 3.0
DEFAULT_CT = 12.0
ROUNDING_EPS = 0.5


# --------------------------------------------------------------------------
# girth
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GirthTable:
    """Per-vertex minimum cycle weight and a witness cycle.

    ``girth[v]`` is ``inf`` and ``cycles[v]`` is ``None`` when ``v`` lies on
    no cycle. Witness cycles are vertex sequences in cycle order.
    """

    girth: np.ndarray
    cycles: tuple

    def is_lower_bound(self, ell) -> bool:
        ell = np.asarray(ell, dtype=float)
        both = np.isfinite(ell) & np.isfinite(self.girth)
        return bool(np.all(ell[both] <= self.girth[both]))


def _tree_path(pred: np.ndarray, src: int, u: int) -> list[int]:
    # vertices from src to u along the predecessor tree
    out = [u]
    while u != src:
        u = int(pred[u])
        out.append(u)
    return out[::-1]


def _check_weights(g: WeightedGraph, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.shape != (g.n,) or (z < 0).any() or not np.isfinite(z).all():
        raise ValueError("vertex weights must be a finite nonnegative vector of length n")
    return z


@lru_cache(maxsize=64)
def _csr_layout(g: WeightedGraph):
    # symmetric adjacency in CSR order; edge k and its reverse are k and m + k
    E = g.edge_array
    rows = np.concatenate([E[:, 0], E[:, 1]])
    cols = np.concatenate([E[:, 1], E[:, 0]])
    order = np.lexsort((cols, rows))
    indptr = np.concatenate([[0], np.cumsum(np.bincount(rows, minlength=g.n))])
    return order, cols[order].astype(np.int32), indptr.astype(np.int32)


def _closing_edges(g: WeightedGraph, z: np.ndarray):
    """Per-source cycle values at every edge, with the shortest-path trees.

    Vertex weights become edge weights ``(z_a + z_b)/2``, so a cycle's edge
    weight equals its vertex weight. Each source's shortest-path tree is
    labelled by the child of the source each vertex descends from; a cycle
    through the source closes at a non-tree edge whose endpoints carry
    different labels, and the lightest such closure is a lightest cycle.
    Returns ``vals`` of shape ``(n, m)`` (``inf`` where no cycle closes) and
    the predecessor matrix, or ``None`` when the graph cannot have a cycle.
    """
    n = g.n
    E = g.edge_array
    if n < 3 or E.shape[0] < 3:
        return None
    a, b = E[:, 0], E[:, 1]
    ew = 0.5 * (z[a] + z[b])
    order, indices, indptr = _csr_layout(g)
    # explicit zeros stay edges in csgraph's sparse input
    A = sp.csr_matrix((np.concatenate([ew, ew])[order], indices, indptr), shape=(n, n))
    D, P = dijkstra(A, directed=True, return_predecessors=True)
    src = np.arange(n)[:, None]
    label = np.where((P == src) | (P < 0), np.arange(n)[None, :], P)
    for _ in range(max(1, math.ceil(math.log2(n))) + 1):
        label = np.take_along_axis(label, label, axis=1)
    vals = D[:, a] + ew[None, :] + D[:, b]
    ok = (label[:, a] != label[:, b]) & (P[:, b] != a[None, :]) & (P[:, a] != b[None, :]) & np.isfinite(vals)
    return np.where(ok, vals, math.inf), P


def _lightest_at(g: WeightedGraph, z: np.ndarray, vals: np.ndarray, P: np.ndarray, v: int):
    # re-score near-ties with exact vertex sums so the result does not
    # depend on the order of floating path sums
    E = g.edge_array
    best = vals[v].min()
    top = None
    for e in np.flatnonzero(vals[v] <= best * (1 + 1e-12) + 1e-300):
        a, b = int(E[e, 0]), int(E[e, 1])
        cyc = _tree_path(P[v], v, a) + _tree_path(P[v], v, b)[1:][::-1]
        wt = math.fsum(z[cyc])
        if top is None or wt < top[0]:
            top = (wt, tuple(cyc))
    return top


def girth_table(g: WeightedGraph, z) -> GirthTable:
    """Exact minimum-weight simple cycle through every vertex.

    Runs one shortest-path tree per vertex: ``O(n (m + n log n))``.
    """
    z = _check_weights(g, z)
    girth = np.full(g.n, math.inf)
    cycles: list = [None] * g.n
    res = _closing_edges(g, z)
    if res is not None:
        vals, P = res
        for v in np.flatnonzero(np.isfinite(vals.min(axis=1))):
            girth[v], cycles[v] = _lightest_at(g, z, vals, P, int(v))
    return GirthTable(girth, tuple(cycles))


def min_weight_cycle_through(g: WeightedGraph, z, v: int) -> tuple[float, frozenset]:
    """``(weight, vertex set)`` of a lightest simple cycle through ``v``; ``(inf, {})`` if none."""
    if not 0 <= v < g.n:
        raise ValueError(f"vertex {v} outside [0, {g.n})")
    t = girth_table(g, z)
    if t.cycles[v] is None:
        return math.inf, frozenset()
    return float(t.girth[v]), frozenset(t.cycles[v])


def separation_oracle(g: WeightedGraph, x, sep_tol: float = SEP_TOL) -> tuple[float, tuple | None]:
    """Globally lightest cycle under ``x``; the cycle is ``None`` unless it violates ``x(C) >= 1 - sep_tol``.

    The cycle is returned as a sorted tuple of vertex ids.
    """
    x = _check_weights(g, x)
    res = _closing_edges(g, x)
    if res is None:
        return math.inf, None
    vals, P = res
    per_vertex = vals.min(axis=1)
    if not np.isfinite(per_vertex).any():
        return math.inf, None
    v = int(np.argmin(per_vertex))
    weight, cyc = _lightest_at(g, x, vals, P, v)
    if weight >= 1.0 - sep_tol:
        return weight, None
    return weight, tuple(sorted(cyc))


# --------------------------------------------------------------------------
# LP
# --------------------------------------------------------------------------

def solve_fvs_lp(g: WeightedGraph, w, lam: float, kappa: float, tol: float | None = None,
                 sep_tol: float = SEP_TOL, rows=(), warm_start=None, warm_x=None) -> LPSolution:
    """Cutting-plane solve of the regularized cycle-covering LP.

    ``rows`` seeds the working set with known cycles (any cycle is a valid
    constraint, so extra rows never change the optimum); ``warm_start`` is a
    dual vector for those rows and ``warm_x`` a primal face hint. At most
    ``n**2`` cuts are added before a :class:`SolverError`. The final working
    set is returned in ``telemetry["rows"]``.
    """
    w = np.asarray(w, dtype=float)
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    work = list(dict.fromkeys(tuple(sorted(r)) for r in rows))
    seen = set(work)
    warm = None if warm_start is None else np.asarray(warm_start, dtype=float)
    cuts = 0
    iters = 0
    while True:
        prog = CoveringProgram(g.n, tuple(work), tuple(w), lam, kappa)
        sol = solve_regularized(prog, tol=tol, warm_start=warm, warm_x=warm_x)
        warm_x = sol.x
        iters += sol.iterations
        weight, cyc = separation_oracle(g, sol.x, sep_tol)
        if cyc is None:
            tel = dict(sol.telemetry, rows=tuple(work), cuts=cuts, min_cycle=weight)
            return LPSolution(sol.x, sol.certified_gap, sol.y, iters, tel)
        if cyc in seen:
            raise SolverError(f"working row {cyc} violated after solve", sol.certified_gap)
        if cuts >= g.n ** 2:
            raise SolverError(f"cut budget of {g.n ** 2} rows exhausted", sol.certified_gap)
        work.append(cyc)
        seen.add(cyc)
        cuts += 1
        warm = np.append(sol.y, 0.0)


# --------------------------------------------------------------------------
# sparsification and rounding
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SparsifierOutput:
    """Sparsified weights ``z_tilde`` with the per-vertex probabilities ``p``."""

    z_tilde: np.ndarray
    p: np.ndarray
    t: int


def repetitions(n: int, eps: float, C_t: float = DEFAULT_CT) -> int:
    """``t = ceil(C_t * eps**-2 * ln n)``."""
    if not eps > 0 or not C_t > 0:
        raise ValueError("eps and C_t must be positive")
    return math.ceil(C_t * math.log(max(n, 2)) / (eps * eps))


def sampling_probabilities(ell, t: int) -> np.ndarray:
    """``p_v = min(t / ell_v, 1)``; ``ell_v = inf`` gives ``p_v = 0``."""
    ell = np.asarray(ell, dtype=float)
    if (ell <= 0).any() or np.isnan(ell).any():
        raise ValueError("girth lower bounds must be positive")
    return np.minimum(t / ell, 1.0)


def keep_probabilities(z, p) -> np.ndarray:
    """``q_v = 1 - (1 - p_v)**z_v``."""
    z = np.asarray(z, dtype=float)
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = -np.expm1(z * np.log1p(-p))
    return np.where(p >= 1.0, np.where(z > 0, 1.0, 0.0), q)


def _check_z(g: WeightedGraph, z) -> np.ndarray:
    z = np.asarray(z)
    if z.shape != (g.n,):
        raise ValueError("z must have one entry per vertex")
    if (z < 1).any() or (z != np.floor(z)).any():
        raise ValueError("z must be integers >= 1")
    return z.astype(np.int64)


def _sp_keys(n: int) -> list[str]:
    return [f"fvs/sp/v={v}" for v in range(n)]


def cycle_sparsify(g: WeightedGraph, z, ell, eps: float, tape: RandomTape,
                   C_t: float = DEFAULT_CT) -> SparsifierOutput:
    """``z_tilde_v = Binomial(z_v, p_v) / p_v`` by inverse transform of one uniform per vertex.

    The draw is positive exactly when the vertex's uniform is below
    ``q_v``, so the support agrees with :func:`sparsify_support` on the same
    tape.
    """
    z = _check_z(g, z)
    t = repetitions(g.n, eps, C_t)
    p = sampling_probabilities(ell, t)
    q = keep_probabilities(z, p)
    u = tape.uniforms(_sp_keys(g.n)) if g.n else np.zeros(0)
    k = np.zeros(g.n)
    for v in np.flatnonzero(u < q):
        k[v] = min(max(binom.isf(u[v], z[v], p[v]), 1.0), z[v])
    z_tilde = np.divide(k, p, out=np.zeros(g.n), where=p > 0)
    return SparsifierOutput(z_tilde, p, t)


def cycle_sparsify_batch(g: WeightedGraph, z, ell, eps: float, seeds, C_t: float = DEFAULT_CT) -> np.ndarray:
    """``z_tilde`` rows for many seeds; row ``i`` equals :func:`cycle_sparsify` on ``RandomTape(seeds[i])``."""
    z = _check_z(g, z)
    seeds = np.asarray(seeds)
    p = sampling_probabilities(ell, repetitions(g.n, eps, C_t))
    q = keep_probabilities(z, p)
    u = batch_uniforms(seeds, _sp_keys(g.n)) if g.n else np.zeros((seeds.size, 0))
    hit = u < q
    zz, pp = np.broadcast_to(z, u.shape), np.broadcast_to(p, u.shape)
    k = np.zeros(u.shape)
    k[hit] = np.minimum(np.maximum(binom.isf(u[hit], zz[hit], pp[hit]), 1.0), zz[hit])
    return np.divide(k, pp, out=np.zeros(u.shape), where=pp > 0)


def sparsify_support(g: WeightedGraph, z, ell, tape: RandomTape, eps: float = ROUNDING_EPS,
                     C_t: float = DEFAULT_CT) -> frozenset:
    """Vertices whose sparsified weight is positive: ``u_v < q_v``."""
    z = _check_z(g, z)
    q = keep_probabilities(z, sampling_probabilities(ell, repetitions(g.n, eps, C_t)))
    u = tape.uniforms(_sp_keys(g.n)) if g.n else np.zeros(0)
    return frozenset(int(v) for v in np.flatnonzero(u < q))


def scaled_weights(x, n: int, b) -> np.ndarray:
    """``z_v = ceil(n**2 x_v + b)``; ``b`` may be one offset per row."""
    x = np.asarray(x, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.ceil(n * n * x + (b[..., None] if b.ndim else b)).astype(np.int64)


def rounding_fvs(g: WeightedGraph, x, tape: RandomTape, C_t: float = DEFAULT_CT) -> frozenset:
    """Support of the sparsifier of ``z = ceil(n**2 x + b)`` with ``ell = n**2``, ``eps = 1/2``."""
    n = g.n
    if n == 0:
        return frozenset()
    b = sample_fixed(0.0, 1.0, tape, "fvs/b")
    z = scaled_weights(x, n, b)
    return sparsify_support(g, z, np.full(n, float(n * n)), tape, ROUNDING_EPS, C_t)


def rounding_fvs_batch(g: WeightedGraph, xs, seeds, C_t: float = DEFAULT_CT) -> np.ndarray:
    """Selection matrix for per-seed LP rows ``xs`` (or one shared vector)."""
    seeds = np.asarray(seeds)
    q = support_probabilities_batch(g, xs, seeds, C_t)
    return batch_uniforms(seeds, _sp_keys(g.n)) < q if g.n else q.astype(bool)


# --------------------------------------------------------------------------
# end to end
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FVSConfig:
    eps: float
    C: float = DEFAULT_C
    C_t: float = DEFAULT_CT

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"epsilon must be positive, got {self.eps}")
        if not self.C > 0 or not self.C_t > 0:
            raise ValueError("C and C_t must be positive")

    def lower(self, g: WeightedGraph, w) -> float:
        """``L = eps ||w||_1 / (C n log n)``."""
        return self.eps * float(np.sum(w)) / (self.C * g.n * log_n(g.n))

    def kappa(self, g: WeightedGraph) -> float:
        return self.eps / (self.C * log_n(g.n))

    def resolved(self, g: WeightedGraph, w) -> dict:
        return {"epsilon": self.eps, "C": self.C, "C_t": self.C_t, "L": self.lower(g, w),
                "kappa": self.kappa(g), "t": repetitions(g.n, ROUNDING_EPS, self.C_t)}


def cycle_vertices(g: WeightedGraph) -> frozenset:
    """Vertices lying on at least one cycle."""
    t = girth_table(g, np.ones(g.n))
    return frozenset(int(v) for v in np.flatnonzero(np.isfinite(t.girth)))


def feedback_vertex_set(g: WeightedGraph, w, eps: float, tape: RandomTape, C: float = DEFAULT_C,
                        C_t: float = DEFAULT_CT, tol: float | None = None) -> frozenset:
    """Randomized feedback vertex set with stable regularization.

    Graphs with at most two vertices return the empty set; an all-zero
    weight vector returns every vertex that lies on a cycle.
    """
    w = g.w if w is None else np.asarray(w, dtype=float)
    if g.n <= 2:
        return frozenset()
    if float(w.sum()) == 0.0:
        return cycle_vertices(g)
    cfg = FVSConfig(eps, C, C_t)
    lam = sample_ratio(cfg.lower(g, w), 2.0, tape, "fvs/lambda")
    sol = solve_fvs_lp(g, w, lam, cfg.kappa(g), tol=tol)
    return rounding_fvs(g, sol.x, tape, C_t)


def fvs_lp_batch(g: WeightedGraph, w, eps: float, seeds, C: float = DEFAULT_C, tol: float | None = None,
                 telemetry: dict | None = None, rows=(), start=None, states: list | None = None) -> np.ndarray:
    """LP solution per seed; each solve starts from the previous seed's rows and duals.

    ``start`` and ``states`` work as in the set cover batch: per-seed
    ``(y, x)`` warm starts in, per-seed pairs out. Duals refer to a prefix of
    the final row list, which only ever grows. Solutions agree with the
    scalar path up to the solver tolerances.
    """
    w = np.asarray(w, dtype=float)
    seeds = np.asarray(seeds)
    cfg = FVSConfig(eps, C)
    lams = batch_sample_ratio(cfg.lower(g, w), 2.0, seeds, "fvs/lambda")
    kappa = cfg.kappa(g)
    xs = np.empty((seeds.size, g.n))
    ys: list = [None] * seeds.size
    rows, warm, wx = tuple(rows), None, None
    gap = 0.0
    # nearby lambdas share a face, so solving in lambda order keeps warm starts exact
    for i in np.argsort(lams, kind="stable"):
        if start is not None:
            warm, wx = start[i]
        sol = solve_fvs_lp(g, w, float(lams[i]), kappa, tol=tol, rows=rows, warm_start=warm, warm_x=wx)
        xs[i] = sol.x
        ys[i] = sol.y
        rows, warm, wx = sol.telemetry["rows"], sol.y, sol.x
        gap = max(gap, sol.certified_gap)
    if states is not None:
        states[:] = list(zip(ys, xs))
    if telemetry is not None:
        telemetry["max_certified_gap"] = max(gap, telemetry.get("max_certified_gap", 0.0))
        telemetry["rows"] = rows
        telemetry["lambda"] = lams
    return xs


def support_probabilities_batch(g: WeightedGraph, xs, seeds, C_t: float = DEFAULT_CT) -> np.ndarray:
    """``q_v`` per seed given that seed's LP row and offset; the rounding keeps
    ``v`` iff its own uniform falls below ``q_v``."""
    seeds = np.asarray(seeds)
    n = g.n
    xs = np.broadcast_to(np.asarray(xs, dtype=float), (seeds.size, n))
    if n == 0:
        return np.zeros((seeds.size, 0))
    z = scaled_weights(xs, n, batch_uniform(seeds, "fvs/b"))
    p = min(repetitions(n, ROUNDING_EPS, C_t) / (n * n), 1.0)
    return keep_probabilities(z, np.full(z.shape, p))


def feedback_vertex_set_batch(g: WeightedGraph, w, eps: float, seeds, C: float = DEFAULT_C,
                              C_t: float = DEFAULT_CT, tol: float | None = None,
                              telemetry: dict | None = None, rows=()) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    seeds = np.asarray(seeds)
    if g.n <= 2:
        return np.zeros((seeds.size, g.n), dtype=bool)
    if float(w.sum()) == 0.0:
        mask = np.zeros(g.n, dtype=bool)
        mask[list(cycle_vertices(g))] = True
        return np.tile(mask, (seeds.size, 1))
    xs = fvs_lp_batch(g, w, eps, seeds, C, tol, telemetry, rows)
    return rounding_fvs_batch(g, xs, seeds, C_t)
