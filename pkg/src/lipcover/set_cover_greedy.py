"""Greedy set cover over rounded weights with level-based hashing.

Set weights are rounded onto the grid ``s**(K*b + i/M)`` (``b`` shared and
random), giving an integer index ``i_S``. Every nonempty subset ``A`` of
``S`` becomes a candidate ``(x, A, S)`` with ``x = i_S - M*log_s|A|``, unless
the residue ``i_S mod K*M`` is too small for that size. Candidates are
processed in increasing ``x``; a candidate whose ``A`` is still entirely
uncovered buys ``S`` and covers ``A``.

Ordering is exact: ``x`` is encoded as a pair of integers, so ties between
irrational values are detected without floating point. Exact ties are broken
by a keyed random priority of ``A``, then of ``(A, S)``, then by encoding.

Tape keys: ``"lg/b"``, ``"lg/pi/A=<enc>"``, ``"lg/pi/A=<enc>/S=<id>"``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import combinations

import numpy as np

from .instances import SetSystem
from .metrics import InfeasibleError
from .shared_randomness import RandomTape, batch_uniform, batch_uniforms

NEG_INF = float("-inf")
DEFAULT_BUDGET = 1 << 20


class BudgetError(ValueError):
    """The expanded subset family would be too large."""


def harmonic(s: int) -> float:
    return float(sum(Fraction(1, k) for k in range(1, s + 1)))


@dataclass(frozen=True)
class GreedyParams:
    """Grid resolution ``M`` and level width ``K`` (both >= 1)."""

    K: int
    M: int

    def __post_init__(self):
        if int(self.K) < 1 or int(self.M) < 1:
            raise ValueError(f"K and M must be >= 1, got K={self.K}, M={self.M}")

    @classmethod
    def from_epsilon(cls, eps: float, s: int) -> "GreedyParams":
        """``K = ceil(4 H_s / eps) (s - 1)`` and ``M = ceil(4 H_s log2(s) / eps)``.

        With base-2 logarithm, ``s**(1/M) <= 2**(eps / (4 H_s))``.
        """
        _check_s(s)
        if not eps > 0:
            raise ValueError(f"epsilon must be positive, got {eps}")
        h = harmonic(s)
        K = math.ceil(4 * h / eps) * (s - 1)
        M = math.ceil(4 * h * math.log2(s) / eps)
        return cls(K, M)

    def ratio_bound(self, s: int) -> float:
        """Approximation factor ``H_s (1 + (s-1)/K) s**(1/M)``."""
        return harmonic(s) * (1 + (s - 1) / self.K) * s ** (1 / self.M)


def _check_s(s: int) -> None:
    if s < 2:
        raise ValueError("greedy set cover needs s >= 2 (log base s); use naive_set_cover when s = 1")


# --------------------------------------------------------------------------
# exact arithmetic on x = i - M log_s a
# --------------------------------------------------------------------------

@lru_cache(maxsize=None)
def size_table(s: int, M: int) -> tuple[tuple[int, ...], tuple[int, ...], tuple[int, ...]]:
    """Exact per-size data for sizes ``a = 1..s`` (index ``a``; slot 0 unused).

    Returns ``(q, rank, need)`` where ``M log_s a = q[a] + phi(a)`` with
    ``0 <= phi < 1``, ``rank`` orders sizes by ``phi`` (equal phi, equal
    rank), and ``need[a] = ceil(M log_s a)`` is the smallest residue for which
    a subset of size ``a`` is admissible.
    """
    q = [0] * (s + 1)
    for a in range(1, s + 1):
        p = a ** M
        k = 0
        while s ** (k + 1) <= p:
            k += 1
        q[a] = k
    need = [0] * (s + 1)
    for a in range(1, s + 1):
        need[a] = q[a] if s ** q[a] == a ** M else q[a] + 1

    def cmp_phi(a1, a2):
        # phi(a1) vs phi(a2)  <=>  a1^M s^q2  vs  a2^M s^q1
        l, r = a1 ** M * s ** q[a2], a2 ** M * s ** q[a1]
        return (l > r) - (l < r)

    sizes = list(range(1, s + 1))
    rank = [0] * (s + 1)
    for a in sizes:
        rank[a] = sum(1 for b in sizes if cmp_phi(b, a) < 0 and _is_class_rep(b, sizes, cmp_phi))
    return tuple(q), tuple(rank), tuple(need)


def _is_class_rep(b, sizes, cmp_phi):
    return all(cmp_phi(c, b) != 0 for c in sizes if c < b)


def exact_key(i, a: int, s: int, M: int) -> tuple:
    """Integer sort key equivalent to ``x = i - M log_s a`` (``-inf`` first)."""
    if i == NEG_INF or i is None:
        return (0, 0, 0)
    q, rank, _ = size_table(s, M)
    # x = (i - q) - phi with phi in [0,1): larger phi means smaller x
    return (1, int(i) - q[a], -rank[a])


def compare_x(i1, a1: int, i2, a2: int, s: int, M: int) -> int:
    """Exact three-way comparison of ``i1 - M log_s a1`` and ``i2 - M log_s a2``.

    Uses ``x1 < x2  <=>  s**i1 * a2**M < s**i2 * a1**M`` in integers.
    """
    n1, n2 = i1 == NEG_INF, i2 == NEG_INF
    if n1 or n2:
        return (n2 and not n1) - (n1 and not n2)
    lo = min(i1, i2)
    left = s ** (i1 - lo) * a2 ** M
    right = s ** (i2 - lo) * a1 ** M
    return (left > right) - (left < right)


def compute_index(w_S: float, b: float, s: int, M: int, K: int = 1):
    """Grid index ``floor(M (log_s w_S - K b))``, or ``-inf`` when ``w_S = 0``."""
    _check_s(s)
    if w_S < 0:
        raise ValueError("weights must be nonnegative")
    if w_S == 0:
        return NEG_INF
    return int(_indices(np.array([w_S]), np.array([b]), s, M, K)[0, 0])


def _indices(w: np.ndarray, b: np.ndarray, s: int, M: int, K: int) -> np.ndarray:
    """Index matrix of shape (len(b), len(w)); zero-weight entries are 0 (masked elsewhere)."""
    with np.errstate(divide="ignore"):
        lw = np.where(w > 0, np.log(np.where(w > 0, w, 1.0)) / math.log(s), 0.0)
    y = M * (lw[None, :] - K * b[:, None])
    r = np.round(y)
    # snap values within rounding noise of a grid point onto it
    y = np.where(np.abs(y - r) <= 1e-9 * np.maximum(1.0, np.abs(y)), r, y)
    return np.floor(y).astype(np.int64)


def level(i, K: int, M: int):
    return NEG_INF if i == NEG_INF else int(i) // (K * M)


def is_hashed(i, size: int, s: int, K: int, M: int) -> bool:
    """``i mod KM < M log_s |S|`` (never true for zero-weight sets)."""
    if i == NEG_INF:
        return False
    return (int(i) % (K * M)) < size_table(s, M)[2][size]


def encode(A) -> str:
    return "-".join(str(e) for e in sorted(A))


def tie_priority(A, tape: RandomTape) -> float:
    return tape.uniform(f"lg/pi/A={encode(A)}")


@dataclass(frozen=True)
class ExpandedTuple:
    i: object  # int or -inf
    A: tuple
    S: int

    def x(self, s: int, M: int) -> float:
        return NEG_INF if self.i == NEG_INF else self.i - M * math.log(len(self.A)) / math.log(s)


# --------------------------------------------------------------------------
# candidate family
# --------------------------------------------------------------------------

class _Family:
    """All (A, S) pairs of a set system, with per-pair static data."""

    def __init__(self, sys: SetSystem, budget: int):
        total = sum(2 ** len(S) for S in sys.sets)
        if total > budget:
            raise BudgetError(f"expanded family needs {total} subsets (budget {budget})")
        parent, size, mask, a_idx, subsets = [], [], [], [], []
        a_index: dict[tuple, int] = {}
        for j, S in enumerate(sys.sets):
            for k in range(1, len(S) + 1):
                for A in combinations(S, k):
                    parent.append(j)
                    size.append(k)
                    mask.append(sum(1 << e for e in A))
                    subsets.append(A)
                    a_idx.append(a_index.setdefault(A, len(a_index)))
        self.parent = np.array(parent, dtype=np.int64)
        self.size = np.array(size, dtype=np.int64)
        self.mask = mask
        self.subsets = subsets
        self.a_idx = np.array(a_idx, dtype=np.int64)
        self.distinct = list(a_index)
        self.a_keys = [f"lg/pi/A={encode(A)}" for A in self.distinct]
        self.pair_keys = [f"lg/pi/A={encode(A)}/S={j}" for A, j in zip(subsets, parent)]


_FAMILY_CACHE: dict = {}


def _family(sys: SetSystem, budget: int) -> _Family:
    key = (sys.n_elements, sys.sets)
    fam = _FAMILY_CACHE.get(key)
    if fam is None:
        fam = _Family(sys, budget)
        if len(_FAMILY_CACHE) > 256:
            _FAMILY_CACHE.clear()
        _FAMILY_CACHE[key] = fam
    return fam


def build_queue(sys: SetSystem, w, params: GreedyParams, b: float,
                budget: int = DEFAULT_BUDGET) -> list[ExpandedTuple]:
    """Admissible candidates in canonical (set, subset) order, unsorted."""
    s = sys.s
    _check_s(s)
    w = np.asarray(w, dtype=float)
    fam = _family(sys, budget)
    idx = _indices(w, np.array([b]), s, params.M, params.K)[0]
    need = size_table(s, params.M)[2]
    KM = params.K * params.M
    out = []
    for p, j in enumerate(fam.parent):
        if w[j] == 0:
            out.append(ExpandedTuple(NEG_INF, fam.subsets[p], int(j)))
        elif idx[j] % KM >= need[fam.size[p]]:
            out.append(ExpandedTuple(int(idx[j]), fam.subsets[p], int(j)))
    return out


# --------------------------------------------------------------------------
# greedy pass
# --------------------------------------------------------------------------

def _run(sys: SetSystem, fam: _Family, w: np.ndarray, params: GreedyParams,
         b: np.ndarray, prio_a: np.ndarray, prio_pair: np.ndarray) -> np.ndarray:
    s, K, M = sys.s, params.K, params.M
    q, rank, need = (np.array(t, dtype=np.int64) for t in size_table(s, M))
    runs = b.shape[0]
    idx = _indices(w, b, s, M, K)
    zero = w == 0
    KM = K * M
    full = (1 << sys.n_elements) - 1
    out = np.zeros((runs, sys.m), dtype=bool)
    par, size = fam.parent, fam.size
    zero_pair = zero[par]
    ordinal = np.arange(par.size)
    for r in range(runs):
        ip = idx[r, par]
        ok = zero_pair | (ip % KM >= need[size])
        sel = np.flatnonzero(ok)
        # lexsort: last key is primary
        order = np.lexsort((
            ordinal[sel],
            prio_pair[r, sel],
            prio_a[r, fam.a_idx[sel]],
            # zero-weight tuples all have x = -inf and tie on both x keys
            np.where(zero_pair[sel], 0, -rank[size[sel]]),
            np.where(zero_pair[sel], 0, ip[sel] - q[size[sel]]),
            (~zero_pair[sel]).astype(np.int64),
        ))
        R = full
        row = out[r]
        for p in sel[order]:
            a = fam.mask[p]
            if a & R == a:
                row[par[p]] = True
                R &= ~a
                if not R:
                    break
        if R:
            raise InfeasibleError("some element is not covered by any set")
    return out


def lipschitz_greedy(sys: SetSystem, w, params: GreedyParams | None, tape: RandomTape,
                     eps: float = 1.0, budget: int = DEFAULT_BUDGET) -> frozenset:
    """Greedy cover over the hashed, rounded subset family.

    ``params`` defaults to :meth:`GreedyParams.from_epsilon` with ``eps``.
    """
    _check_s(sys.s)
    if params is None:
        params = GreedyParams.from_epsilon(eps, sys.s)
    w = sys.w if w is None else np.asarray(w, dtype=float)
    fam = _family(sys, budget)
    b = np.array([tape.uniform("lg/b")])
    pa = tape.uniforms(fam.a_keys)[None, :]
    pp = tape.uniforms(fam.pair_keys)[None, :]
    row = _run(sys, fam, w, params, b, pa, pp)[0]
    return frozenset(int(j) for j in np.flatnonzero(row))


def lipschitz_greedy_batch(sys: SetSystem, w, params: GreedyParams | None, seeds,
                           eps: float = 1.0, budget: int = DEFAULT_BUDGET,
                           chunk: int = 2048) -> np.ndarray:
    _check_s(sys.s)
    if params is None:
        params = GreedyParams.from_epsilon(eps, sys.s)
    w = np.asarray(w, dtype=float)
    fam = _family(sys, budget)
    seeds = np.asarray(seeds)
    parts = []
    for lo in range(0, seeds.size, chunk):
        sd = seeds[lo: lo + chunk]
        b = batch_uniform(sd, "lg/b")
        pa = batch_uniforms(sd, fam.a_keys)
        pp = batch_uniforms(sd, fam.pair_keys)
        parts.append(_run(sys, fam, w, params, b, pa, pp))
    return np.concatenate(parts) if parts else np.zeros((0, sys.m), dtype=bool)


def hash_rate(sys: SetSystem, w, params: GreedyParams, S: int, seeds) -> float:
    """Fraction of seeds for which set ``S`` is hashed."""
    b = batch_uniform(np.asarray(seeds), "lg/b")
    idx = _indices(np.asarray(w, dtype=float)[[S]], b, sys.s, params.M, params.K)[:, 0]
    need = size_table(sys.s, params.M)[2][len(sys.sets[S])]
    return float(((idx % (params.K * params.M)) < need).mean())
