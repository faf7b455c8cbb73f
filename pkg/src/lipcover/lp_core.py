"""Doubly regularized covering LP.

Minimize ::

    f(x) = sum_S w_S x_S + (lam/2) sum_S x_S**2 + (kappa/2) sum_S w_S x_S**2

subject to ``sum_{S in row} x_S >= 1`` for every row and ``0 <= x <= 1``.

The objective is separable with curvature ``d_S = lam + kappa*w_S >= lam``,
so the Lagrange dual ::

    g(y) = sum_e y_e + sum_S min_{0<=x<=1} [(w_S - (A^T y)_S) x + d_S x**2 / 2]

has a closed-form inner minimizer (a clipped ratio) and is smooth. The
solver runs accelerated projected gradient ascent on ``g`` over ``y >= 0``,
periodically polishing with an exact active-set solve of the KKT system.
Every returned point is certified: a row-feasible primal ``x`` and a dual
``y >= 0`` with ``f(x) - g(y) <= tol``, so by weak duality ``f(x)`` is within
``tol`` of the optimum and ``||x - x*|| <= sqrt(2 tol / lam)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog


class SolverError(RuntimeError):
    """Iteration budget exhausted before the gap certificate reached ``tol``."""

    def __init__(self, msg: str, gap: float):
        super().__init__(msg)
        self.gap = gap


@dataclass(frozen=True)
class CoveringProgram:
    """Covering program data. ``rows`` lists variable ids per constraint."""

    m: int
    rows: tuple[tuple[int, ...], ...]
    weights: tuple[float, ...]
    lam: float
    kappa: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(tuple(int(j) for j in r) for r in self.rows))
        object.__setattr__(self, "weights", tuple(float(x) for x in self.weights))
        if len(self.weights) != self.m:
            raise ValueError(f"expected {self.m} weights, got {len(self.weights)}")
        if any(x < 0 or not math.isfinite(x) for x in self.weights):
            raise ValueError("weights must be finite and nonnegative")
        if not (self.lam > 0) or not math.isfinite(self.lam):
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if not (self.kappa >= 0) or not math.isfinite(self.kappa):
            raise ValueError(f"kappa must be nonnegative, got {self.kappa}")
        for i, r in enumerate(self.rows):
            if not r:
                raise ValueError(f"row {i} is empty")
            if any(not 0 <= j < self.m for j in r):
                raise ValueError(f"row {i} has a variable id outside [0, {self.m})")

    @property
    def w(self) -> np.ndarray:
        return np.array(self.weights)

    @property
    def curvature(self) -> np.ndarray:
        return self.lam + self.kappa * self.w

    def matrix(self) -> np.ndarray:
        A = np.zeros((len(self.rows), self.m))
        for i, r in enumerate(self.rows):
            A[i, list(r)] = 1.0
        return A

    def with_weights(self, w) -> "CoveringProgram":
        return CoveringProgram(self.m, self.rows, tuple(w), self.lam, self.kappa)


@dataclass(frozen=True)
class LPSolution:
    """Certified solution.

    ``x`` is box-feasible and row-feasible; ``certified_gap`` bounds
    ``f(x) - f(x*)``; ``y`` is the dual certificate.
    """

    x: np.ndarray
    certified_gap: float
    y: np.ndarray
    iterations: int = 0
    telemetry: dict = field(default_factory=dict)


def objective(prog: CoveringProgram, x) -> float:
    x = np.asarray(x, dtype=float)
    w = prog.w
    return float(w @ x + 0.5 * prog.lam * (x @ x) + 0.5 * prog.kappa * (w @ (x * x)))


def gradient(prog: CoveringProgram, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    w = prog.w
    return w + prog.lam * x + prog.kappa * w * x


FACE_TOL = 1e-12
# active-set corrections tried from a warm start before falling back to FISTA
WARM_ROUNDS = 6


def default_tol(lam: float) -> float:
    return min(1e-9, lam * 1e-6)


class _Dual:
    def __init__(self, A: np.ndarray, w: np.ndarray, d: np.ndarray):
        self.A, self.w, self.d = A, w, d
        self.AT = np.ascontiguousarray(A.T)

    def x_of(self, y):
        return np.clip((self.AT @ y - self.w) / self.d, 0.0, 1.0)

    def value(self, y, x=None):
        if x is None:
            x = self.x_of(y)
        a = self.AT @ y
        return float(y.sum() + ((self.w - a) * x + 0.5 * self.d * x * x).sum())

    def primal(self, x):
        return float(self.w @ x + 0.5 * (self.d * x * x).sum())


def _repair(A: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Row-feasible point above ``x``: each short row's variables are scaled
    up by the inverse of that row's coverage."""
    x = x.copy()
    cov = A @ x
    empty = cov <= 0
    if empty.any():
        x[(A[empty] > 0).any(axis=0)] = 1.0
        cov = A @ x
    short = cov < 1.0
    while short.any():
        factor = (A[short] * (1.0 / cov[short])[:, None]).max(axis=0)
        x = np.minimum(1.0, x * np.maximum(factor, 1.0))
        cov = A @ x
        short = cov < 1.0
        if short.any():
            # rounding left a row a hair short; nudge by one ulp
            x = np.where((A[short] > 0).any(axis=0) & (x > 0), np.minimum(1.0, np.nextafter(x, 2.0)), x)
            cov = A @ x
            short = cov < 1.0
    return x


def _polish(D: _Dual, y: np.ndarray, row_tol: float = 1e-7, x_face=None, rounds: int = 1):
    """Exact steps for the active set suggested by ``y`` (or by ``x_face``).

    Yields ``(x, y)`` candidates: ``x`` minimizes the objective over a
    guessed face (free variables solve an equality-constrained quadratic on
    the tight rows) and ``y >= 0`` is a dual fitted to its KKT conditions.
    Between rounds the face is corrected primal-dual active-set style: rows
    the fitted dual does not use are released, violated rows are added, and
    variables move between bounds and the interior by sign checks.
    """
    A, w, d = D.A, D.w, D.d
    if x_face is None:
        x_face = (D.AT @ y - w) / d
    # a hint within FACE_TOL of a bound is read as sitting on it
    free = (x_face > FACE_TOL) & (x_face < 1 - FACE_TOL)
    upper = x_face >= 1 - FACE_TOL
    tight = (A @ np.clip(x_face, 0.0, 1.0)) <= 1.0 + row_tol
    seen = set()
    fitted = False
    for k in range(rounds):
        state = (free.tobytes(), upper.tobytes(), tight.tobytes())
        if state in seen:
            break
        seen.add(state)
        # exact dual fits cost an LP solve; earlier rounds correct the face
        # with the least-squares multipliers alone, which need a free variable;
        # the first face is usually right, so it gets the exact fit as well
        fitted = k in (0, rounds - 1) or not free.any()
        steps = _FaceStep(D, free, upper, tight, fit_exact=fitted)
        xr = yield from steps
        yf = steps.last
        r = (D.AT @ yf - w) / d
        lower = ~free & ~upper
        xr = np.where(lower & (r > FACE_TOL), r, xr)
        xr = np.where(upper & (r < 1 - FACE_TOL), r, xr)
        x = np.clip(xr, 0.0, 1.0)
        free = (xr > FACE_TOL) & (xr < 1 - FACE_TOL)
        upper = xr >= 1 - FACE_TOL
        tight = (tight & (yf > 0)) | ((A @ x) < 1.0 - row_tol)
    if not fitted:
        yield from _FaceStep(D, free, upper, tight, fit_exact=True)


class _FaceStep:
    """Candidate ``(x, y)`` pairs for one face, produced lazily.

    The dual is degenerate whenever more rows are tight than variables are
    free, so a clipped least-squares dual may fail; an exact fit of all
    KKT conditions by a small LP follows.
    Iteration returns the unclipped face minimizer; ``last`` holds the
    final dual produced.
    """

    def __init__(self, D: _Dual, free, upper, tight, fit_exact: bool = True):
        self.D, self.free, self.upper, self.tight = D, free, upper, tight
        self.fit_exact = fit_exact
        self.last = np.zeros(D.A.shape[0])

    def __iter__(self):
        D, free, upper, tight = self.D, self.free, self.upper, self.tight
        A, w, d = D.A, D.w, D.d
        nrow = A.shape[0]
        xr = np.where(upper, 1.0, 0.0)
        nt = int(tight.sum())
        y_ls = np.zeros(nrow)
        if nt and free.any():
            Ar = A[tight]
            Af = Ar[:, free]
            M = (Af / d[free]) @ Af.T
            rhs = 1.0 - Ar[:, upper].sum(axis=1) + Af @ (w[free] / d[free])
            sol, *_ = np.linalg.lstsq(M, rhs, rcond=None)
            xr[free] = (Af.T @ sol - w[free]) / d[free]
            y_ls[tight] = np.maximum(sol, 0.0)
        x = np.clip(xr, 0.0, 1.0)
        self.last = y_ls
        yield x, y_ls
        if not nt or not self.fit_exact:
            return xr
        y_fit = _fit_dual(A[tight].T, w, d, x, free, upper)
        y_full = np.zeros(nrow)
        y_full[tight] = y_fit
        self.last = y_full
        yield x, y_full
        return xr


def _fit_dual(At: np.ndarray, w, d, x, free, upper) -> np.ndarray:
    """Nonnegative tight-row dual closest (in l1) to the face's KKT conditions.

    Stationarity ``At_F y = w_F + d_F x_F`` on free variables and the sign
    conditions ``At_Z y <= w_Z``, ``At_U y >= w_U + d_U`` on variables at a
    bound each get a slack; the LP minimizing total slack is always
    feasible and has zero optimum exactly when the face is right.
    """
    lower = ~free & ~upper
    nt = At.shape[1]
    nf, nz, nu = int(free.sum()), int(lower.sum()), int(upper.sum())
    c = np.concatenate([np.zeros(nt), np.ones(2 * nf + nz + nu)])
    A_eq = b_eq = A_ub = b_ub = None
    if nf:
        A_eq = np.hstack([At[free], np.eye(nf), -np.eye(nf), np.zeros((nf, nz + nu))])
        b_eq = w[free] + d[free] * x[free]
    if nz or nu:
        A_ub = np.zeros((nz + nu, c.size))
        A_ub[:nz, :nt] = At[lower]
        A_ub[:nz, nt + 2 * nf: nt + 2 * nf + nz] = -np.eye(nz)
        A_ub[nz:, :nt] = -At[upper]
        A_ub[nz:, nt + 2 * nf + nz:] = -np.eye(nu)
        b_ub = np.concatenate([w[lower], -(w[upper] + d[upper])])
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status != 0:
        return np.zeros(nt)
    return np.maximum(res.x[:nt], 0.0)


def solve_regularized(prog: CoveringProgram, tol: float | None = None, warm_start=None,
                      max_iter: int = 200_000, polish_every: int = 20, warm_x=None) -> LPSolution:
    """Solve the regularized covering program to a certified gap ``<= tol``.

    Parameters
    ----------
    prog : CoveringProgram
    tol : float, optional
        Target gap; defaults to ``min(1e-9, 1e-6 * lam)``.
    warm_start : array, optional
        Initial dual vector (one entry per row; shorter vectors are padded
        with zeros, which is how cutting-plane callers extend it).
    warm_x : array, optional
        Primal point whose face (free, at-bound and tight sets) is tried
        first; a solution of a nearby program usually lies on the same face.
    """
    if tol is None:
        tol = default_tol(prog.lam)
    if not tol > 0:
        raise ValueError("tol must be positive")
    w = prog.w
    d = prog.curvature
    nrow = len(prog.rows)
    if nrow == 0:
        # unconstrained: every variable sits at its lower bound
        x = np.zeros(prog.m)
        return LPSolution(x, 0.0, np.zeros(0), 0, {"polish": 0})
    A = prog.matrix()
    D = _Dual(A, w, d)
    y = np.zeros(nrow)
    if warm_start is not None:
        ws = np.asarray(warm_start, dtype=float)[:nrow]
        y[: ws.size] = np.maximum(ws, 0.0)
    row_len = A.sum(axis=1).max()
    col_cnt = A.sum(axis=0).max()
    Lg = row_len * col_cnt / d.min()
    step = 1.0 / Lg

    best = (math.inf, None, None)

    def certify(yc, xc=None):
        nonlocal best
        gap = math.inf
        for cand in ((D.x_of(yc),) if xc is None else (xc, D.x_of(yc))):
            x = _repair(A, cand)
            g = D.primal(x) - D.value(yc)
            if g < best[0]:
                best = (g, x, yc.copy())
            gap = min(gap, g)
        return gap

    def polish(yc, xf=None, rounds=1):
        # returns (certified, best dual seen in this polish)
        top, top_val = None, -math.inf
        for xp, yp in _polish(D, yc, x_face=xf, rounds=rounds):
            if certify(yp, xp) <= tol:
                return True, yp
            v = D.value(yp)
            if v > top_val:
                top, top_val = yp, v
        return False, top

    # active-set polish first: from a warm start it usually finishes at once
    # a warm face usually certifies at once; otherwise try the face of y
    if warm_x is not None:
        done, _ = polish(y, np.asarray(warm_x, dtype=float), rounds=WARM_ROUNDS)
        if done:
            return _result(best, 0)
    done, yp = polish(y, rounds=WARM_ROUNDS if warm_start is not None else 1)
    if done:
        return _result(best, 0)

    z = y.copy()
    t = 1.0
    gv = D.value(y)
    it = 0
    next_polish = polish_every
    while it < max_iter:
        it += 1
        x = D.x_of(z)
        y_new = np.maximum(z + step * (1.0 - A @ x), 0.0)
        g_new = D.value(y_new)
        if g_new < gv and t > 1.0:
            # restart momentum on ascent failure; a plain gradient step from
            # y is monotone up to rounding, so it is never rejected
            t = 1.0
            z = y.copy()
            continue
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        z = y_new + ((t - 1.0) / t_new) * (y_new - y)
        y, t, gv = y_new, t_new, g_new
        if it >= next_polish:
            if certify(y) <= tol:
                return _result(best, it)
            done, yp = polish(y)
            if done:
                return _result(best, it)
            # failed polishes back off geometrically (they cost a factorization)
            polish_every = min(2 * polish_every, 640)
            next_polish = it + polish_every
            if yp is not None and D.value(yp) > gv:
                y, z, gv, t = yp, yp.copy(), D.value(yp), 1.0
    raise SolverError(f"no certificate within {max_iter} iterations (gap {best[0]:.3g} > tol {tol:.3g})", best[0])


def _result(best, it) -> LPSolution:
    gap, x, y = best
    return LPSolution(x, max(float(gap), 0.0), y, it, {"gap": max(float(gap), 0.0)})


def stability_probe(prog: CoveringProgram, S: int, delta: float, tol: float | None = None) -> float:
    """``sum_T |w_T x_T - w'_T x'_T| / delta`` with ``w' = w + delta * 1_S``."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    sol = solve_regularized(prog, tol)
    w2 = list(prog.weights)
    w2[S] += delta
    prog2 = prog.with_weights(w2)
    sol2 = solve_regularized(prog2, tol, warm_start=sol.y)
    return float(np.abs(prog.w * sol.x - prog2.w * sol2.x).sum() / delta)


def stability_bound(prog: CoveringProgram, constant: float = 1.0) -> float:
    """``constant * ((1 + kappa) sqrt(||w||_1 / (lam kappa)) + 1)``."""
    if prog.kappa == 0:
        return math.inf
    return constant * ((1 + prog.kappa) * math.sqrt(sum(prog.weights) / (prog.lam * prog.kappa)) + 1)
