"""Empirical Lipschitz and approximation audits under shared randomness.

Every estimate here is an empirical lower bound on the worst-case constant:
only finitely many weight pairs are probed.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np

from . import fvs, set_cover_greedy, set_cover_lp, set_cover_naive, vertex_cover
from .instances import WeightedGraph
from .metrics import (MAX_FVS_ORACLE, MAX_SC_ORACLE, MAX_VC_ORACLE, WeightedOutput, brute_opt,
                      distance_batch, empirical_em, expected_distance, feasible_batch)
from .shared_randomness import RandomTape, batch_uniforms

LABEL = "empirical lower bound; theoretical bound for reference"
DELTA_FRACTIONS = (1e-3, 1e-2, 1e-1)
CSV_COLUMNS = ("algorithm", "instance", "coord", "delta", "trials", "lip_mean", "lip_stderr",
               "approx_mean", "feas_rate")


# --------------------------------------------------------------------------
# algorithms
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class AlgParams:
    """Tunable constants shared by the registry; ``None`` means the algorithm's default."""

    eps: float = 0.5
    K: int | None = None
    M: int | None = None
    C: float | None = None
    C_t: float | None = None

    def greedy(self, s: int) -> set_cover_greedy.GreedyParams:
        base = set_cover_greedy.GreedyParams.from_epsilon(self.eps, s)
        return set_cover_greedy.GreedyParams(self.K or base.K, self.M or base.M)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Algorithm:
    """``run`` maps ``(instance, w, tape, params)`` to a selected id set;
    ``batch`` maps ``(instance, w, seeds, params, telemetry)`` to a boolean
    matrix with one row per seed and the same values as ``run``.

    ``probs``, when present, maps ``(instance, w, seeds, params, telemetry,
    start)`` to ``(P, state)``: ``P[i, v]`` is the probability that
    coordinate ``v`` is kept given seed ``i``'s coarse draws, where ``v`` is
    kept iff one shared uniform of its own falls below ``P[i, v]``. ``state``
    is passed back as ``start`` to warm-start a nearby weight vector.
    """

    name: str
    problem: str
    run: Callable
    batch: Callable
    probs: Callable | None = None


def _lp_kw(p: AlgParams) -> dict:
    return {} if p.C is None else {"C": p.C}


def _fvs_kw(p: AlgParams) -> dict:
    kw = _lp_kw(p)
    if p.C_t is not None:
        kw["C_t"] = p.C_t
    return kw


def _vc_probs(g, w, seeds, p, tel=None, start=None):
    w = np.asarray(w, dtype=float)
    P = vertex_cover.inclusion_probabilities(g, w, vertex_cover.compute_duals(g, w))
    return np.tile(P, (len(seeds), 1)), None


def _lp_probs(sys, w, seeds, p, tel=None, start=None):
    w = np.asarray(w, dtype=float)
    if float(w.sum()) == 0.0:
        return np.ones((len(seeds), sys.m)), None
    states: list = []
    xs = set_cover_lp.lp_solutions_batch(sys, w, p.eps, seeds, telemetry=tel, start=start, states=states,
                                         **_lp_kw(p))
    K = set_cover_lp.LPSetCoverConfig(p.eps, **_lp_kw(p)).rounds(sys)
    return set_cover_lp.keep_probabilities(xs, K), states


def _fvs_probs(g, w, seeds, p, tel=None, start=None):
    w = np.asarray(w, dtype=float)
    if g.n <= 2:
        return np.zeros((len(seeds), g.n)), None
    if float(w.sum()) == 0.0:
        mask = np.zeros(g.n)
        mask[list(fvs.cycle_vertices(g))] = 1.0
        return np.tile(mask, (len(seeds), 1)), None
    rows, pairs = start if start is not None else ((), None)
    states: list = []
    tel = {} if tel is None else tel
    xs = fvs.fvs_lp_batch(g, w, p.eps, seeds, telemetry=tel, rows=rows, start=pairs, states=states,
                          **_lp_kw(p))
    C_t = p.C_t if p.C_t is not None else fvs.DEFAULT_CT
    return fvs.support_probabilities_batch(g, xs, seeds, C_t), (tel["rows"], states)


_BASE = {
    "vertex-cover": Algorithm(
        "vertex-cover", "vc",
        lambda g, w, tape, p: vertex_cover.vertex_cover(g, w, tape),
        lambda g, w, seeds, p, tel=None: vertex_cover.vertex_cover_batch(g, w, seeds), _vc_probs),
    "naive-sc": Algorithm(
        "naive-sc", "sc",
        lambda s, w, tape, p: set_cover_naive.naive_set_cover(s, w, p.eps, tape),
        lambda s, w, seeds, p, tel=None: set_cover_naive.naive_set_cover_batch(s, w, p.eps, seeds)),
    "greedy-sc": Algorithm(
        "greedy-sc", "sc",
        lambda s, w, tape, p: set_cover_greedy.lipschitz_greedy(s, w, p.greedy(s.s), tape, p.eps),
        lambda s, w, seeds, p, tel=None: set_cover_greedy.lipschitz_greedy_batch(s, w, p.greedy(s.s), seeds, p.eps)),
    "lp-sc": Algorithm(
        "lp-sc", "sc",
        lambda s, w, tape, p: set_cover_lp.lp_based_set_cover(s, w, p.eps, tape, **_lp_kw(p)),
        lambda s, w, seeds, p, tel=None: set_cover_lp.lp_based_set_cover_batch(
            s, w, p.eps, seeds, telemetry=tel, **_lp_kw(p)), _lp_probs),
    "fvs": Algorithm(
        "fvs", "fvs",
        lambda g, w, tape, p: fvs.feedback_vertex_set(g, w, p.eps, tape, **_fvs_kw(p)),
        lambda g, w, seeds, p, tel=None: fvs.feedback_vertex_set_batch(g, w, p.eps, seeds, telemetry=tel,
                                                                       **_fvs_kw(p)), _fvs_probs),
}

ALGORITHM_NAMES = tuple(_BASE) + tuple(f"baseline:{k}" for k in _BASE)


def get_algorithm(name: str) -> Algorithm:
    """Registry lookup; ``baseline:<name>`` wraps ``<name>`` in :func:`baseline_wrapper`."""
    if name in _BASE:
        return _BASE[name]
    if name.startswith("baseline:") and name[len("baseline:"):] in _BASE:
        inner = _BASE[name[len("baseline:"):]]
        return Algorithm(
            name, inner.problem,
            lambda inst, w, tape, p: baseline_wrapper(inner, inst, w, p, tape),
            lambda inst, w, seeds, p, tel=None: baseline_batch(inner, inst, w, p, seeds, tel),
            None if inner.probs is None else
            lambda inst, w, seeds, p, tel=None, start=None: (baseline_probs(inner, inst, w, p, seeds, tel), None))
    raise ValueError(f"unknown algorithm {name!r}; valid names: {', '.join(ALGORITHM_NAMES)}")


def n_coords(instance) -> int:
    return instance.n if isinstance(instance, WeightedGraph) else instance.m


# --------------------------------------------------------------------------
# baseline: weight rounding with a random offset
# --------------------------------------------------------------------------

def _oracle_limit(problem: str) -> int:
    return {"vc": MAX_VC_ORACLE, "sc": MAX_SC_ORACLE, "fvs": MAX_FVS_ORACLE}[problem]


def estimate_opt(problem: str, instance, w) -> float:
    """Reference optimum for grid sizing.

    Exact by brute force at oracle sizes. Larger vertex-cover instances use
    twice the primal-dual lower bound; other problems fall back to the
    weight of every coordinate that can appear in a solution.
    """
    inst = instance.with_weights(np.asarray(w, dtype=float))
    if n_coords(inst) <= _oracle_limit(problem):
        return brute_opt(problem, inst).opt_value
    if problem == "vc":
        return 2.0 * vertex_cover.compute_duals(inst, inst.w).dual_value
    if problem == "fvs":
        return float(inst.w[list(fvs.cycle_vertices(inst))].sum())
    return float(inst.w.sum())


def _beta_keys(k: int) -> list[str]:
    return [f"baseline/beta/v={v}" for v in range(k)]


def rounded_weights(w, grid: float, beta) -> np.ndarray:
    """``grid * floor(w / grid + beta)``; rows of ``beta`` give one vector per run."""
    w = np.asarray(w, dtype=float)
    if grid <= 0:
        return np.broadcast_to(w, np.shape(beta)).copy()
    return grid * np.floor(w / grid + np.asarray(beta))


def baseline_grid(problem: str, instance, w, eps: float) -> float:
    """Grid step ``eps * OPT / n``."""
    return eps * estimate_opt(problem, instance, w) / max(n_coords(instance), 1)


def baseline_wrapper(alg: Algorithm, instance, w, params: AlgParams, tape: RandomTape) -> frozenset:
    """Run ``alg`` on weights rounded to a randomly offset grid of step ``eps * OPT / n``.

    A zero grid step (``OPT = 0``) runs ``alg`` on the original weights.
    """
    w = np.asarray(w, dtype=float)
    grid = baseline_grid(alg.problem, instance, w, params.eps)
    beta = tape.uniforms(_beta_keys(len(w)))
    return alg.run(instance, rounded_weights(w, grid, beta), tape, params)


def baseline_batch(alg: Algorithm, instance, w, params: AlgParams, seeds, telemetry=None) -> np.ndarray:
    """Batch form of :func:`baseline_wrapper`; seeds sharing a rounded vector share one batch call."""
    w = np.asarray(w, dtype=float)
    seeds = np.asarray(seeds)
    grid = baseline_grid(alg.problem, instance, w, params.eps)
    wr = rounded_weights(w, grid, batch_uniforms(seeds, _beta_keys(len(w))))
    out = np.zeros((seeds.size, len(w)), dtype=bool)
    uniq, inv = np.unique(wr, axis=0, return_inverse=True)
    for k, row in enumerate(uniq):
        idx = np.flatnonzero(inv.ravel() == k)
        out[idx] = alg.batch(instance, row, seeds[idx], params, telemetry)
    return out


def baseline_probs(alg: Algorithm, instance, w, params: AlgParams, seeds, telemetry=None) -> np.ndarray:
    """Conditional keep probabilities of the wrapped algorithm, given each seed's offsets."""
    w = np.asarray(w, dtype=float)
    seeds = np.asarray(seeds)
    grid = baseline_grid(alg.problem, instance, w, params.eps)
    wr = rounded_weights(w, grid, batch_uniforms(seeds, _beta_keys(len(w))))
    out = np.zeros((seeds.size, len(w)))
    uniq, inv = np.unique(wr, axis=0, return_inverse=True)
    for k, row in enumerate(uniq):
        idx = np.flatnonzero(inv.ravel() == k)
        out[idx] = alg.probs(instance, row, seeds[idx], params, telemetry)[0]
    return out


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PerturbationSpec:
    """Single-coordinate bump ``w' = w + delta * e_coord``.

    ``mode="relative"`` requires ``0 < delta <= w_coord``; ``mode="from-zero"``
    first sets ``w_coord = 0`` in the base vector.
    """

    coord: int
    delta: float
    mode: str = "relative"

    def apply(self, w) -> tuple[np.ndarray, np.ndarray]:
        """``(base, perturbed)`` weight vectors; raises on inadmissible specs."""
        w = np.array(w, dtype=float)
        if not 0 <= self.coord < len(w):
            raise ValueError(f"coordinate {self.coord} outside [0, {len(w)})")
        if not self.delta > 0 or not math.isfinite(self.delta):
            raise ValueError(f"delta must be positive and finite, got {self.delta}")
        if self.mode == "relative":
            if not self.delta <= w[self.coord]:
                raise ValueError(f"relative bump needs delta <= w[{self.coord}] = {w[self.coord]}")
        elif self.mode == "from-zero":
            w[self.coord] = 0.0
        else:
            raise ValueError(f"unknown perturbation mode {self.mode!r}")
        w2 = w.copy()
        w2[self.coord] += self.delta
        return w, w2


def perturbation_corpus(w, fractions=DELTA_FRACTIONS, coords=None) -> list[PerturbationSpec]:
    """Coordinate sweep: relative bumps ``f * w_v`` for positive weights and
    from-zero bumps ``f * max(w) / n`` for every coordinate."""
    w = np.asarray(w, dtype=float)
    n = len(w)
    scale = float(w.max(initial=0.0)) / max(n, 1) or 1.0
    out = []
    for v in range(n) if coords is None else coords:
        if w[v] > 0:
            out.extend(PerturbationSpec(v, f * float(w[v])) for f in fractions)
        out.extend(PerturbationSpec(v, f * scale, "from-zero") for f in fractions)
    return out


@dataclass(frozen=True)
class AuditReport:
    """One audit line; statistics carry their trial count and standard error."""

    algorithm: str
    instance: str
    trials: int
    seed0: int
    coord: int | None = None
    delta: float | None = None
    mode: str | None = None
    lipschitz_estimate: float | None = None
    lipschitz_stderr: float | None = None
    approx_ratio: float | None = None
    approx_stderr: float | None = None
    feasibility_rate: float = 1.0
    infeasible_trials: int = 0
    telemetry: dict = field(default_factory=dict)
    label: str = LABEL

    def row(self) -> dict:
        return {"algorithm": self.algorithm, "instance": self.instance, "coord": self.coord,
                "delta": self.delta, "trials": self.trials, "lip_mean": self.lipschitz_estimate,
                "lip_stderr": self.lipschitz_stderr, "approx_mean": self.approx_ratio,
                "feas_rate": self.feasibility_rate}

    def to_dict(self) -> dict:
        d = asdict(self)
        d["telemetry"] = _jsonable(self.telemetry)
        return d


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    return x


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    if x.size == 0:
        return math.nan, math.nan
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
    return float(x.mean()), se


def _resolve(alg) -> Algorithm:
    return alg if isinstance(alg, Algorithm) else get_algorithm(alg)


def _seeds(trials: int, seed0: int) -> np.ndarray:
    if trials < 1:
        raise ValueError("trials must be >= 1")
    return np.arange(seed0, seed0 + trials, dtype=np.int64)


def _telemetry(tel: dict) -> dict:
    # keep scalar summaries only; per-seed arrays would bloat the report
    return {k: v for k, v in tel.items() if isinstance(v, (int, float, str))}


ESTIMATORS = ("sampled", "conditional")


def _check_estimator(alg: Algorithm, estimator: str) -> None:
    if estimator not in ESTIMATORS:
        raise ValueError(f"unknown estimator {estimator!r}; valid: {', '.join(ESTIMATORS)}")
    if estimator == "conditional" and alg.probs is None:
        raise ValueError(f"algorithm {alg.name!r} has no conditional estimator")


def _run_base(alg: Algorithm, instance, w, seeds, params, estimator: str, tel: dict):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        if estimator == "sampled":
            return alg.batch(instance, w, seeds, params, tel)
        return alg.probs(instance, w, seeds, params, tel)


def audit_lipschitz(alg, instance, weights, spec: PerturbationSpec, trials: int, seed0: int = 0,
                    params: AlgParams = AlgParams(), instance_id: str = "instance",
                    opt: float | None = None, estimator: str = "sampled", base=None) -> AuditReport:
    """Mean of ``d_w(A(w), A(w')) / delta`` over ``trials`` shared seeds.

    ``estimator="sampled"`` draws the full tape. ``"conditional"`` draws
    only each seed's coarse randomness and integrates the per-coordinate
    uniforms exactly (see :func:`~lipcover.metrics.expected_distance`); the
    mean is the same, the variance lower. Infeasible sampled outputs are
    counted in the report, never dropped; the conditional estimator samples
    no outputs and reports a NaN feasibility rate. With ``opt`` given the
    report also carries the base run's approximation ratio. ``base`` reuses
    an earlier base run of the same weights and seeds.
    """
    alg = _resolve(alg)
    _check_estimator(alg, estimator)
    w, w2 = spec.apply(weights)
    seeds = _seeds(trials, seed0)
    tel: dict = {}
    if base is None:
        base = _run_base(alg, instance, w, seeds, params, estimator, tel)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        if estimator == "sampled":
            s1 = base
            s2 = alg.batch(instance, w2, seeds, params, tel)
        else:
            P1, state = base
            P2, _ = alg.probs(instance, w2, seeds, params, tel, state)
    approx = approx_se = None
    if estimator == "sampled":
        ratio = distance_batch(s1, s2, w, w2) / spec.delta
        feas = feasible_batch(alg.problem, instance, s1) & feasible_batch(alg.problem, instance, s2)
        rate, bad = float(feas.mean()), int((~feas).sum())
        if opt is not None:
            approx, approx_se = _ratio_stats(s1 @ w, opt)
    else:
        ratio = expected_distance(P1, P2, w, w2) / spec.delta
        rate, bad = math.nan, 0
        if opt is not None:
            approx, approx_se = _ratio_stats(P1 @ w, opt)
    lip, lip_se = _mean_se(ratio)
    tel = dict(_telemetry(tel), estimator=estimator)
    return AuditReport(alg.name, instance_id, trials, seed0, spec.coord, spec.delta, spec.mode, lip, lip_se,
                       approx, approx_se, rate, bad, tel)


def _ratio_stats(weights: np.ndarray, opt: float) -> tuple[float, float]:
    if opt > 0:
        return _mean_se(weights / opt)
    # zero optimum: ratio 1 when the output is free as well
    return (1.0, 0.0) if float(np.max(weights, initial=0.0)) == 0.0 else (math.inf, math.nan)


def audit_approximation(alg, instance, weights, trials: int, seed0: int = 0,
                        params: AlgParams = AlgParams(), instance_id: str = "instance") -> AuditReport:
    """Mean output weight over the brute-force optimum, with the feasibility rate."""
    alg = _resolve(alg)
    w = np.asarray(weights, dtype=float)
    opt = brute_opt(alg.problem, instance.with_weights(w)).opt_value
    seeds = _seeds(trials, seed0)
    tel: dict = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sel = alg.batch(instance, w, seeds, params, tel)
    feas = feasible_batch(alg.problem, instance, sel)
    ratio, se = _ratio_stats(sel @ w, opt)
    tel = dict(_telemetry(tel), opt=opt, mean_weight=float((sel @ w).mean()))
    return AuditReport(alg.name, instance_id, trials, seed0, approx_ratio=ratio, approx_stderr=se,
                       feasibility_rate=float(feas.mean()), infeasible_trials=int((~feas).sum()),
                       telemetry=tel)


@dataclass(frozen=True)
class SweepResult:
    """Per-probe reports and the sweep's Lipschitz estimate (max over probes)."""

    reports: tuple
    lipschitz_estimate: float
    lipschitz_stderr: float
    argmax: int

    @property
    def worst(self) -> AuditReport:
        return self.reports[self.argmax]


def audit_sweep(alg, instance, weights, trials: int, seed0: int = 0, params: AlgParams = AlgParams(),
                specs=None, instance_id: str = "instance", with_approx: bool = False,
                estimator: str = "sampled") -> SweepResult:
    """Run :func:`audit_lipschitz` over a perturbation corpus.

    The estimate is the maximum per-probe mean, never an average over
    probes. Relative probes share one base run.
    """
    alg = _resolve(alg)
    _check_estimator(alg, estimator)
    w = np.asarray(weights, dtype=float)
    specs = perturbation_corpus(w) if specs is None else list(specs)
    if not specs:
        raise ValueError("empty perturbation corpus")
    opt = None
    if with_approx and n_coords(instance) <= _oracle_limit(alg.problem):
        opt = brute_opt(alg.problem, instance.with_weights(w)).opt_value
    base = None
    reps = []
    for sp_ in specs:
        if sp_.mode == "relative":
            if base is None:
                base = _run_base(alg, instance, w, _seeds(trials, seed0), params, estimator, {})
            reps.append(audit_lipschitz(alg, instance, w, sp_, trials, seed0, params, instance_id, opt,
                                        estimator, base))
        else:
            # from-zero probes change the base, so the approximation column
            # applies only to relative ones
            reps.append(audit_lipschitz(alg, instance, w, sp_, trials, seed0, params, instance_id, None,
                                        estimator))
    k = int(np.argmax([r.lipschitz_estimate for r in reps]))
    return SweepResult(tuple(reps), reps[k].lipschitz_estimate, reps[k].lipschitz_stderr, k)


def em_check(alg, instance, weights, spec: PerturbationSpec, samples: int = 32, seed0: int = 0,
             params: AlgParams = AlgParams()) -> tuple[float, float, float]:
    """``(em, shared_mean, shared_stderr)`` on ``samples`` seeds, all per unit ``delta``.

    The distributional distance matches the two empirical output
    distributions optimally; the shared-seed pairing is one feasible
    matching, so ``em <= shared_mean`` holds sample by sample.
    """
    alg = _resolve(alg)
    w, w2 = spec.apply(weights)
    seeds = _seeds(samples, seed0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        s1 = alg.batch(instance, w, seeds, params)
        s2 = alg.batch(instance, w2, seeds, params)
    out1 = [WeightedOutput(frozenset(np.flatnonzero(r).tolist()), tuple(w)) for r in s1]
    out2 = [WeightedOutput(frozenset(np.flatnonzero(r).tolist()), tuple(w2)) for r in s2]
    em = empirical_em(out1, out2) / spec.delta
    mean, se = _mean_se(distance_batch(s1, s2, w, w2) / spec.delta)
    return em, mean, se


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------

def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def reports_to_csv(reports) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(CSV_COLUMNS)
    for r in reports:
        row = r.row()
        wr.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def reports_to_json(reports, meta: dict | None = None) -> str:
    doc = {"label": LABEL, "columns": list(CSV_COLUMNS), "rows": [_jsonable(r.row()) for r in reports],
           "reports": [r.to_dict() for r in reports]}
    if meta is not None:
        doc["meta"] = _jsonable(meta)
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=True)


def with_params(params: AlgParams, **kw) -> AlgParams:
    return replace(params, **{k: v for k, v in kw.items() if v is not None})
