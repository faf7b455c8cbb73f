"""Set cover by a regularized LP followed by repeated independent rounding.

The regularizer strength ``lam`` is drawn uniformly from ``[L, 2L]`` with the
ratio sampler, where ``L = eps * ||w||_1 / (C m log n)``; ``kappa = eps / (C
log n)``. The LP solution is rounded in ``ceil(C ln n)`` passes, each pass
keeping set ``S`` with probability ``x_S``.

Tape keys: ``"lpsc/lambda/*"``, ``"rsc/k=<round>/S=<id>"``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .instances import SetSystem
from .lp_core import CoveringProgram, LPSolution, solve_regularized
from .metrics import InfeasibleError
from .shared_randomness import RandomTape, batch_sample_ratio, batch_uniforms, sample_ratio

DEFAULT_C = 3.0


def log_n(n: int) -> float:
    """``ln n`` floored at 1 so that tiny instances keep finite parameters."""
    return max(math.log(n), 1.0) if n > 0 else 1.0


@dataclass(frozen=True)
class LPSetCoverConfig:
    eps: float
    C: float = DEFAULT_C

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"epsilon must be positive, got {self.eps}")
        if not self.C > 0:
            raise ValueError(f"C must be positive, got {self.C}")

    def lower(self, sys: SetSystem, w) -> float:
        """``L = eps ||w||_1 / (C m log n)``."""
        return self.eps * float(np.sum(w)) / (self.C * sys.m * log_n(sys.n_elements))

    def kappa(self, sys: SetSystem) -> float:
        return self.eps / (self.C * log_n(sys.n_elements))

    def rounds(self, sys: SetSystem) -> int:
        return math.ceil(self.C * log_n(sys.n_elements))

    def resolved(self, sys: SetSystem, w) -> dict:
        return {"epsilon": self.eps, "C": self.C, "L": self.lower(sys, w),
                "kappa": self.kappa(sys), "rounds": self.rounds(sys)}


def _check(sys: SetSystem) -> None:
    if not sys.is_coverable():
        raise InfeasibleError("some element is not covered by any set")


def program(sys: SetSystem, w, lam: float, kappa: float) -> CoveringProgram:
    return CoveringProgram(sys.m, sys.containing, tuple(np.asarray(w, dtype=float)), lam, kappa)


def _round_keys(K: int, m: int) -> list[str]:
    return [f"rsc/k={k}/S={j}" for k in range(1, K + 1) for j in range(m)]


def rounding_sc(sys: SetSystem, x, K_rounds: int, tape: RandomTape) -> frozenset:
    """Union of ``K_rounds`` passes; pass ``k`` keeps ``S`` iff ``u_{k,S} < x_S``."""
    x = np.asarray(x, dtype=float)
    if K_rounds <= 0 or sys.m == 0:
        return frozenset()
    u = tape.uniforms(_round_keys(K_rounds, sys.m)).reshape(K_rounds, sys.m)
    keep = (u < x[None, :]).any(axis=0)
    return frozenset(int(j) for j in np.flatnonzero(keep))


def rounding_sc_batch(sys: SetSystem, x, K_rounds: int, seeds, chunk: int = 4096) -> np.ndarray:
    """Selection matrix; ``x`` is one vector or one row per seed."""
    seeds = np.asarray(seeds)
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = np.broadcast_to(x, (seeds.size, sys.m))
    if K_rounds <= 0:
        return np.zeros((seeds.size, sys.m), dtype=bool)
    keys = _round_keys(K_rounds, sys.m)
    out = np.empty((seeds.size, sys.m), dtype=bool)
    for lo in range(0, seeds.size, chunk):
        u = batch_uniforms(seeds[lo: lo + chunk], keys).reshape(-1, K_rounds, sys.m)
        out[lo: lo + chunk] = (u < x[lo: lo + chunk, None, :]).any(axis=1)
    return out


def solve_for_lambda(sys: SetSystem, w, lam: float, kappa: float, warm=None, tol=None) -> LPSolution:
    return solve_regularized(program(sys, w, lam, kappa), tol=tol, warm_start=warm)


def lp_based_set_cover(sys: SetSystem, w, eps: float, tape: RandomTape, C: float = DEFAULT_C,
                       tol: float | None = None) -> frozenset:
    """Regularized-LP set cover with stable ``lam``.

    With ``||w||_1 = 0`` the whole family is returned (cost 0, feasible).
    """
    _check(sys)
    w = sys.w if w is None else np.asarray(w, dtype=float)
    cfg = LPSetCoverConfig(eps, C)
    if float(w.sum()) == 0.0:
        return frozenset(range(sys.m))
    lam = sample_ratio(cfg.lower(sys, w), 2.0, tape, "lpsc/lambda")
    sol = solve_for_lambda(sys, w, lam, cfg.kappa(sys), tol=tol)
    return rounding_sc(sys, sol.x, cfg.rounds(sys), tape)


def lp_solutions_batch(sys: SetSystem, w, eps: float, seeds, C: float = DEFAULT_C,
                       tol: float | None = None, telemetry: dict | None = None, start=None,
                       states: list | None = None) -> np.ndarray:
    """LP solution per seed (one row each).

    Without ``start`` consecutive solves warm-start from each other in
    ``lam`` order; with ``start`` (one ``(y, x)`` pair per seed, as filled
    into ``states`` by an earlier call) each seed warm-starts from its own
    pair. Rows agree with the scalar path up to the certified solver
    tolerance.
    """
    w = np.asarray(w, dtype=float)
    cfg = LPSetCoverConfig(eps, C)
    seeds = np.asarray(seeds)
    lams = batch_sample_ratio(cfg.lower(sys, w), 2.0, seeds, "lpsc/lambda")
    kappa = cfg.kappa(sys)
    xs = np.empty((seeds.size, sys.m))
    ys: list = [None] * seeds.size
    warm = wx = None
    gap = 0.0
    # nearby lambdas share a face, so solving in lambda order keeps warm starts exact
    for i in np.argsort(lams, kind="stable"):
        if start is not None:
            warm, wx = start[i]
        sol = solve_regularized(program(sys, w, float(lams[i]), kappa), tol=tol, warm_start=warm, warm_x=wx)
        xs[i] = sol.x
        ys[i] = sol.y
        warm, wx = sol.y, sol.x
        gap = max(gap, sol.certified_gap)
    if states is not None:
        states[:] = list(zip(ys, xs))
    if telemetry is not None:
        telemetry["max_certified_gap"] = max(gap, telemetry.get("max_certified_gap", 0.0))
        telemetry["lambda"] = lams
    return xs


def keep_probabilities(x, K_rounds: int) -> np.ndarray:
    """``Pr[S kept] = 1 - (1 - x_S)**K_rounds``; ``S`` is kept iff the minimum of its
    ``K_rounds`` uniforms falls below ``x_S``, a monotone event in one shared variable."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    if K_rounds <= 0:
        return np.zeros_like(x)
    with np.errstate(divide="ignore"):
        q = -np.expm1(K_rounds * np.log1p(-x))
    return np.where(x >= 1.0, 1.0, q)


def lp_based_set_cover_batch(sys: SetSystem, w, eps: float, seeds, C: float = DEFAULT_C,
                             tol: float | None = None, telemetry: dict | None = None) -> np.ndarray:
    _check(sys)
    w = np.asarray(w, dtype=float)
    seeds = np.asarray(seeds)
    if float(w.sum()) == 0.0:
        return np.ones((seeds.size, sys.m), dtype=bool)
    xs = lp_solutions_batch(sys, w, eps, seeds, C, tol, telemetry)
    return rounding_sc_batch(sys, xs, LPSetCoverConfig(eps, C).rounds(sys), seeds)
