"""Primal-dual vertex cover with proportional rounding.

All edges grow their dual variable at unit rate until one endpoint becomes
tight (its incident duals sum to its weight). Vertex ``v`` is then kept with
probability ``load(v) / w_v``, where ``load(v)`` is the sum of duals on its
edges. Tight vertices have ratio 1, so the output is always a cover, and the
expected weight is exactly ``2 * sum(y)``.

Tape keys: ``"vc/z/v=<id>"``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .instances import WeightedGraph
from .shared_randomness import RandomTape, batch_uniforms

TIGHT_RTOL = 1e-12


@dataclass(frozen=True)
class DualState:
    """Result of the dual-growth simulation.

    Attributes
    ----------
    y : ndarray
        Final dual value per edge (edge order of the graph).
    tight : ndarray of bool
        Per-vertex tightness at termination.
    events : list of (float, int)
        ``(time, vertex)`` in the order vertices became tight.
    freeze : ndarray
        Time at which each edge stopped growing; ``y == freeze``.
    load : ndarray
        ``sum(y_e for e incident to v)`` per vertex.
    """

    y: np.ndarray
    tight: np.ndarray
    events: list
    freeze: np.ndarray
    load: np.ndarray

    @property
    def dual_value(self) -> float:
        return float(self.y.sum())


def compute_duals(g: WeightedGraph, w=None) -> DualState:
    """Event-driven simulation of simultaneous unit-rate dual growth.

    Vertices that reach tightness at the same step are processed as one batch
    before the active edge set is recomputed.
    """
    w = g.w if w is None else np.asarray(w, dtype=float)
    if w.shape != (g.n,) or (w < 0).any():
        raise ValueError("weights must be a nonnegative vector of length n")
    E = g.edge_array
    m = E.shape[0]
    slack = w.copy()
    tight = w <= 0
    events = [(0.0, int(v)) for v in np.flatnonzero(tight)]
    freeze = np.zeros(m)
    active = ~(tight[E[:, 0]] | tight[E[:, 1]]) if m else np.zeros(0, dtype=bool)
    t = 0.0
    while active.any():
        deg = np.bincount(E[active].ravel(), minlength=g.n)
        grow = deg > 0
        rates = np.full(g.n, np.inf)
        rates[grow] = slack[grow] / deg[grow]
        dt = rates.min()
        t += dt
        slack[grow] -= dt * deg[grow]
        newly = grow & ((rates == dt) | (slack <= TIGHT_RTOL * w))
        slack[newly] = 0.0
        tight |= newly
        for v in np.flatnonzero(newly):
            events.append((t, int(v)))
        done = active & (tight[E[:, 0]] | tight[E[:, 1]])
        freeze[done] = t
        active &= ~done
    load = np.zeros(g.n)
    if m:
        np.add.at(load, E[:, 0], freeze)
        np.add.at(load, E[:, 1], freeze)
    # tight vertices carry their full weight by definition
    load[tight] = w[tight]
    return DualState(freeze.copy(), tight, events, freeze, load)


def inclusion_probabilities(g: WeightedGraph, w, d: DualState) -> np.ndarray:
    """``Pr[v in output]``: 1 for tight or zero-weight vertices, else load/w."""
    w = np.asarray(w, dtype=float)
    p = np.ones(g.n)
    pos = (w > 0) & ~d.tight
    p[pos] = np.minimum(d.load[pos] / w[pos], 1.0)
    return p


def _keys(n: int) -> list[str]:
    return [f"vc/z/v={v}" for v in range(n)]


def round_vc(g: WeightedGraph, w, d: DualState, tape: RandomTape) -> frozenset:
    """Keep ``v`` iff it is tight, has zero weight, or ``z(v) < load(v)/w_v``."""
    p = inclusion_probabilities(g, w, d)
    z = tape.uniforms(_keys(g.n)) if g.n else np.zeros(0)
    keep = (p >= 1.0) | (z < p)
    return frozenset(int(v) for v in np.flatnonzero(keep))


def vertex_cover(g: WeightedGraph, w, tape: RandomTape) -> frozenset:
    w = g.w if w is None else np.asarray(w, dtype=float)
    return round_vc(g, w, compute_duals(g, w), tape)


def vertex_cover_batch(g: WeightedGraph, w, seeds, uniforms: np.ndarray | None = None) -> np.ndarray:
    """Boolean selection matrix, one row per seed.

    ``uniforms`` may carry the precomputed ``(len(seeds), n)`` tape values so
    that paired runs do not recompute them.
    """
    w = np.asarray(w, dtype=float)
    p = inclusion_probabilities(g, w, compute_duals(g, w))
    if uniforms is None:
        uniforms = batch_uniforms(np.asarray(seeds), _keys(g.n))
    return (p >= 1.0)[None, :] | (uniforms < p[None, :])


# --------------------------------------------------------------------------
# residual distance
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ResidualTrace:
    """Residual distance of two dual runs on a merged timeline.

    ``values[i]`` is ``sum_v |slack_v(t) - slack'_v(t)|`` at ``times[i]``.
    Breakpoints include every tightness event of either run and every zero
    crossing of a per-vertex slack difference, so the trace is exact between
    consecutive points (piecewise linear).
    """

    times: np.ndarray
    values: np.ndarray
    terminal_gap: float
    bound: float

    def is_monotone(self, rtol: float = 1e-9) -> bool:
        scale = rtol * max(1.0, float(self.values[0]) if self.values.size else 1.0)
        return bool(np.all(np.diff(self.values) <= scale))

    def bound_holds(self, rtol: float = 1e-12) -> bool:
        return self.terminal_gap <= self.bound * (1 + rtol) + rtol


def _slack_at(g: WeightedGraph, w: np.ndarray, freeze: np.ndarray, t: float) -> np.ndarray:
    E = g.edge_array
    out = w.copy()
    if E.size:
        y = np.minimum(freeze, t)
        np.subtract.at(out, E[:, 0], y)
        np.subtract.at(out, E[:, 1], y)
    return out


def residual_trace(g: WeightedGraph, w, w2) -> ResidualTrace:
    w = np.asarray(w, dtype=float)
    w2 = np.asarray(w2, dtype=float)
    d1 = compute_duals(g, w)
    d2 = compute_duals(g, w2)
    base = sorted({0.0, *(t for t, _ in d1.events), *(t for t, _ in d2.events)})
    times = set(base)
    # add zero crossings of each slack difference between event times
    for a, b in zip(base[:-1], base[1:]):
        da = _slack_at(g, w, d1.freeze, a) - _slack_at(g, w2, d2.freeze, a)
        db = _slack_at(g, w, d1.freeze, b) - _slack_at(g, w2, d2.freeze, b)
        cross = (da * db) < 0
        for v in np.flatnonzero(cross):
            times.add(a + (b - a) * da[v] / (da[v] - db[v]))
    ts = np.array(sorted(times))
    vals = np.array([np.abs(_slack_at(g, w, d1.freeze, t) - _slack_at(g, w2, d2.freeze, t)).sum() for t in ts])
    gap = float(np.abs(d1.load - d2.load).sum())
    return ResidualTrace(ts, vals, gap, 2.0 * float(np.abs(w - w2).sum()))
