"""Command-line entry point: ``lipcover {generate,solve,audit,sparsify,oracle}``.

Exit codes: 0 on success, 2 on usage or input errors, 1 on solver or
oracle errors. ``--error-json`` prints errors as one JSON object on stdout.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, audit, fvs
from .instances import (ConfigError, GeneratorConfig, InstanceError, SetSystem, WeightedGraph, gen_graph,
                        gen_set_system, parse_instance, serialize)
from .lp_core import SolverError
from .metrics import CycleOverflowError, InfeasibleError, OracleSizeError, brute_opt, is_feasible
from .set_cover_greedy import BudgetError
from .shared_randomness import RandomTape


class UsageError(Exception):
    pass


PROBLEMS = ("vc", "sc", "fvs")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("--error-json", action="store_true", help="report errors as JSON on stdout")
    common.add_argument("--seed", type=int, default=0)

    consts = argparse.ArgumentParser(add_help=False)
    consts.add_argument("--epsilon", type=float, default=audit.AlgParams.eps)
    consts.add_argument("--K", type=int)
    consts.add_argument("--M", type=int)
    consts.add_argument("--constant-C", type=float, dest="C")
    consts.add_argument("--constant-t", type=float, dest="C_t")

    p = argparse.ArgumentParser(prog="lipcover", description="Lipschitz covering algorithms and audits.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="write a random instance")
    g.add_argument("--kind", choices=("graph", "set-system"), required=True)
    g.add_argument("--n", type=int, required=True, help="vertices or elements")
    g.add_argument("--m", type=int, default=0, help="number of sets")
    g.add_argument("--p", type=float, default=0.5, help="edge probability")
    g.add_argument("--s", type=int, default=3, help="maximum set size")
    g.add_argument("--f", type=int, default=3, help="maximum element frequency")
    g.add_argument("--weights", default="uniform:1:10", help="uniform:A:B or exponential:RATE")

    s = sub.add_parser("solve", parents=[common, consts], help="run one algorithm on one tape")
    s.add_argument("--alg", required=True)
    s.add_argument("--instance", required=True)
    s.add_argument("--format", choices=("json",), default="json")

    a = sub.add_parser("audit", parents=[common, consts], help="shared-randomness Lipschitz sweep")
    a.add_argument("--alg", required=True)
    a.add_argument("--instance", required=True)
    a.add_argument("--trials", type=int, default=1000)
    a.add_argument("--jobs", type=int, default=1)
    a.add_argument("--coords", help="comma-separated coordinates to probe (default: all)")
    a.add_argument("--fractions", default=",".join(str(f) for f in audit.DELTA_FRACTIONS),
                   help="comma-separated bump sizes relative to the weight")
    a.add_argument("--estimator", choices=audit.ESTIMATORS, default="sampled",
                   help="conditional integrates per-coordinate draws exactly (not every algorithm)")
    a.add_argument("--format", choices=("json", "csv"), default="csv")

    sp = sub.add_parser("sparsify", parents=[common], help="cycle-sparsify integer vertex weights")
    sp.add_argument("--instance", required=True, help="graph whose weights (rounded up, >= 1) are z")
    sp.add_argument("--epsilon", type=float, default=0.5)
    sp.add_argument("--constant-t", type=float, dest="C_t", default=fvs.DEFAULT_CT)
    sp.add_argument("--girth", type=float, help="uniform girth lower bound (default: exact girths)")
    sp.add_argument("--format", choices=("json",), default="json")

    o = sub.add_parser("oracle", parents=[common], help="brute-force optimum")
    o.add_argument("--problem", choices=PROBLEMS, required=True)
    o.add_argument("--instance", required=True)
    o.add_argument("--format", choices=("json",), default="json")
    return p


def _load(path: str):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read instance {path!r}: {exc.strerror}") from exc
    return parse_instance(text)


def _algorithm(name: str, instance) -> audit.Algorithm:
    try:
        alg = audit.get_algorithm(name)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    want = WeightedGraph if alg.problem in ("vc", "fvs") else SetSystem
    if not isinstance(instance, want):
        raise UsageError(f"algorithm {name!r} needs a {'graph' if want is WeightedGraph else 'set system'} instance")
    return alg


def _params(args) -> audit.AlgParams:
    if not args.epsilon > 0:
        raise UsageError("--epsilon must be positive")
    return audit.AlgParams(args.epsilon, args.K, args.M, args.C, args.C_t)


def _meta(args, **extra) -> dict:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("out", "error_json")}
    return {"version": __version__, "command": args.command, "config": cfg, "seed": args.seed, **extra}


def _dump(obj) -> str:
    return json.dumps(audit._jsonable(obj), indent=2, sort_keys=True) + "\n"


def _weights_spec(text: str) -> tuple:
    parts = text.split(":")
    try:
        return (parts[0], *map(float, parts[1:]))
    except ValueError as exc:
        raise UsageError(f"bad --weights {text!r}") from exc


def cmd_generate(args) -> str:
    cfg = GeneratorConfig(args.seed, args.n, args.m, args.p, args.s, args.f, _weights_spec(args.weights))
    inst = gen_graph(cfg) if args.kind == "graph" else gen_set_system(cfg)
    return serialize(inst, _meta(args, generator=cfg.to_dict())) + "\n"


def cmd_solve(args) -> str:
    inst = _load(args.instance)
    alg = _algorithm(args.alg, inst)
    params = _params(args)
    sel = alg.run(inst, inst.w, RandomTape(args.seed), params)
    selected = sorted(int(v) for v in sel)
    return _dump({"selected": selected, "weight": float(inst.w[selected].sum()),
                  "feasible": is_feasible(alg.problem, inst, selected),
                  "meta": _meta(args, params=params.to_dict())})


def cmd_audit(args) -> str:
    inst = _load(args.instance)
    alg = _algorithm(args.alg, inst)
    params = _params(args)
    if args.trials < 1 or args.jobs < 1:
        raise UsageError("--trials and --jobs must be >= 1")
    try:
        fractions = tuple(float(f) for f in args.fractions.split(","))
        coords = None if args.coords is None else [int(c) for c in args.coords.split(",")]
    except ValueError as exc:
        raise UsageError(f"bad list argument: {exc}") from exc
    if any(not 0 < f <= 1 for f in fractions):
        raise UsageError("--fractions must lie in (0, 1]")
    k = audit.n_coords(inst)
    if coords is not None and any(not 0 <= c < k for c in coords):
        raise UsageError(f"--coords must lie in [0, {k})")
    name = Path(args.instance).stem
    if args.estimator == "conditional" and alg.probs is None:
        raise UsageError(f"algorithm {alg.name!r} has no conditional estimator")
    specs = audit.perturbation_corpus(inst.w, fractions, coords)
    jobs = [(alg.name, inst, inst.w, sp_, args.trials, args.seed, params, args.estimator) for sp_ in specs]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            reports = list(ex.map(_probe_named, [(j, name) for j in jobs]))
    else:
        reports = [_probe_named((j, name)) for j in jobs]
    best = max(range(len(reports)), key=lambda i: reports[i].lipschitz_estimate)
    meta = _meta(args, params=params.to_dict(), lipschitz_estimate=reports[best].lipschitz_estimate,
                 lipschitz_stderr=reports[best].lipschitz_stderr, worst_probe=best, label=audit.LABEL)
    if args.format == "csv":
        return "# " + json.dumps(audit._jsonable(meta), sort_keys=True) + "\n" + audit.reports_to_csv(reports)
    return audit.reports_to_json(reports, meta) + "\n"


def _probe_named(item):
    (alg, inst, w, spec, trials, seed, params, estimator), name = item
    return audit.audit_lipschitz(alg, inst, w, spec, trials, seed, params, instance_id=name, estimator=estimator)


def cmd_sparsify(args) -> str:
    g = _load(args.instance)
    if not isinstance(g, WeightedGraph):
        raise UsageError("sparsify needs a graph instance")
    z = np.maximum(np.ceil(g.w), 1).astype(np.int64)
    if args.girth is not None:
        if not args.girth > 0:
            raise UsageError("--girth must be positive")
        ell = np.full(g.n, args.girth)
    else:
        ell = fvs.girth_table(g, z).girth
    out = fvs.cycle_sparsify(g, z, ell, args.epsilon, RandomTape(args.seed), args.C_t)
    return _dump({"z": z, "z_tilde": out.z_tilde, "p": out.p, "t": out.t, "girth_lower_bound": ell,
                  "meta": _meta(args)})


def cmd_oracle(args) -> str:
    inst = _load(args.instance)
    want = SetSystem if args.problem == "sc" else WeightedGraph
    if not isinstance(inst, want):
        raise UsageError(f"problem {args.problem!r} needs a {'set system' if want is SetSystem else 'graph'}")
    res = brute_opt(args.problem, inst)
    return _dump({"opt": res.opt_value, "witness": sorted(res.witness), "meta": _meta(args)})


COMMANDS = {"generate": cmd_generate, "solve": cmd_solve, "audit": cmd_audit, "sparsify": cmd_sparsify,
            "oracle": cmd_oracle}

USAGE_ERRORS = (UsageError, InstanceError, ConfigError)
SOLVER_ERRORS = (SolverError, OracleSizeError, InfeasibleError, CycleOverflowError, BudgetError)


def _fail(error_json: bool, kind: str, exc: Exception, code: int) -> int:
    if error_json:
        print(json.dumps({"error": kind, "type": type(exc).__name__, "message": str(exc)}, sort_keys=True))
    else:
        print(f"lipcover: {kind} error: {exc}", file=sys.stderr)
    return code


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    error_json = "--error-json" in argv
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        code = exc.code if isinstance(exc.code, int) else 2
        if code and error_json:
            print(json.dumps({"error": "usage", "type": "UsageError", "message": "invalid arguments"}))
        return code
    try:
        text = COMMANDS[args.command](args)
    except USAGE_ERRORS as exc:
        return _fail(error_json, "usage", exc, 2)
    except SOLVER_ERRORS as exc:
        return _fail(error_json, "solver", exc, 1)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def main() -> None:
    sys.exit(run())
