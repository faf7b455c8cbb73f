"""Per-element bucketed set cover.

Each element ``e`` looks at the sets containing it, buckets their weights on
a geometric grid with ratio ``1 + eps/s`` and a shared random offset ``b``,
and picks one set uniformly from its cheapest nonempty bucket. The output is
the union of the picks.

Tape keys: ``"nsc/b"`` (grid offset), ``"nsc/e=<id>"`` (choice inside the bucket).
"""

from __future__ import annotations

import warnings

import numpy as np

from .instances import SetSystem
from .metrics import InfeasibleError
from .shared_randomness import RandomTape, batch_uniform, batch_uniforms, sample_fixed


def resolve_epsilon(eps: float, s: int) -> float:
    """Clamp ``eps`` into ``(0, s]``; the bucket analysis needs ``eps/s <= 1``."""
    if not eps > 0:
        raise ValueError(f"epsilon must be positive, got {eps}")
    if eps > s:
        warnings.warn(f"epsilon={eps} exceeds s={s}; clamped to {s}", stacklevel=3)
        return float(s)
    return float(eps)


def bucket_indices(w, b, eps: float, s: int) -> np.ndarray:
    """Bucket index ``t`` with ``base**(b+t) <= w < base**(b+t+1)``; ``-inf`` for zero weight.

    ``b`` may be an array of offsets (one per run); the result then has shape
    ``(len(b), len(w))``.
    """
    w = np.asarray(w, dtype=float)
    b = np.asarray(b, dtype=float)
    base = 1.0 + eps / s
    with np.errstate(divide="ignore"):
        lw = np.log(w) / np.log(base)
    t = np.floor(lw - b[..., None]) if b.ndim else np.floor(lw - b)
    return np.where(w > 0, t, -np.inf)


def _choose(sys: SetSystem, t: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Chosen set id per (run, element) from bucket indices and choice uniforms."""
    runs = t.shape[0]
    out = np.empty((runs, sys.n_elements), dtype=np.int64)
    for e, cover in enumerate(sys.containing):
        if not cover:
            raise InfeasibleError(f"element {e} is not covered by any set")
        cover = np.array(cover)
        te = t[:, cover]
        best = te.min(axis=1, keepdims=True)
        in_bucket = te == best
        size = in_bucket.sum(axis=1)
        idx = np.minimum(np.floor(u[:, e] * size).astype(np.int64), size - 1)
        rank = np.cumsum(in_bucket, axis=1) - 1
        pick = in_bucket & (rank == idx[:, None])
        out[:, e] = cover[pick.argmax(axis=1)]
    return out


def _selection(sys: SetSystem, choices: np.ndarray) -> np.ndarray:
    mask = np.zeros((choices.shape[0], sys.m), dtype=bool)
    rows = np.repeat(np.arange(choices.shape[0]), choices.shape[1])
    mask[rows, choices.ravel()] = True
    return mask


def naive_set_cover(sys: SetSystem, w, eps: float, tape: RandomTape) -> frozenset:
    """Union over elements of a uniform pick from the cheapest weight bucket.

    Zero-weight covering sets form a bucket below every positive bucket.
    """
    w = sys.w if w is None else np.asarray(w, dtype=float)
    eps = resolve_epsilon(eps, max(sys.s, 1))
    b = sample_fixed(0.0, 1.0, tape, "nsc/b")
    t = bucket_indices(w, np.array([b]), eps, max(sys.s, 1))
    u = tape.uniforms([f"nsc/e={e}" for e in range(sys.n_elements)])[None, :]
    choices = _choose(sys, t, u)[0]
    return frozenset(int(j) for j in choices)


def naive_choices_batch(sys: SetSystem, w, eps: float, seeds) -> np.ndarray:
    """Chosen set id per (seed, element); same values as the scalar path."""
    eps = resolve_epsilon(eps, max(sys.s, 1))
    seeds = np.asarray(seeds)
    b = batch_uniform(seeds, "nsc/b")
    t = bucket_indices(np.asarray(w, dtype=float), b, eps, max(sys.s, 1))
    u = batch_uniforms(seeds, [f"nsc/e={e}" for e in range(sys.n_elements)])
    return _choose(sys, t, u)


def naive_set_cover_batch(sys: SetSystem, w, eps: float, seeds) -> np.ndarray:
    return _selection(sys, naive_choices_batch(sys, w, eps, seeds))


def bucket_disagreement_rate(sys: SetSystem, w, T: int, delta: float, eps: float,
                             trials: int, seed0: int = 0) -> float:
    """Largest per-element estimate of ``Pr[S_e != S'_e]`` over ``e in T``.

    ``S'`` is produced under ``w + delta * 1_T`` with the same tape.
    """
    w = np.asarray(w, dtype=float)
    if not w[T] > 0:
        raise ValueError("bucket_disagreement_rate needs w_T > 0")
    if not 0 < delta <= w[T]:
        raise ValueError(f"need 0 < delta <= w_T = {w[T]}, got {delta}")
    w2 = w.copy()
    w2[T] += delta
    seeds = np.arange(seed0, seed0 + trials)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        c1 = naive_choices_batch(sys, w, eps, seeds)
        c2 = naive_choices_batch(sys, w2, eps, seeds)
    elems = list(sys.sets[T])
    return float((c1[:, elems] != c2[:, elems]).mean(axis=0).max())
