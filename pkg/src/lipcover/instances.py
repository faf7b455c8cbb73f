"""Instance types, JSON formats and seeded generators.

Graph file::

    {"n": 3, "edges": [[0, 1], [1, 2], [0, 2]], "weights": [1, 1, 1]}

Set-system file::

    {"n": 2, "sets": [[0], [0, 1]], "weights": [1, 2]}

Both formats accept an optional ``"meta"`` object (ignored on parse) so that
generated files can carry the resolved generator config.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from functools import cached_property

import numpy as np


class InstanceError(ValueError):
    """Malformed or invalid instance data."""


class ParseError(InstanceError):
    pass


class ValidationError(InstanceError):
    pass


class ConfigError(ValueError):
    pass


def _check_weights(weights, count: int, what: str) -> tuple[float, ...]:
    if not isinstance(weights, (list, tuple, np.ndarray)):
        raise ValidationError(f"{what}: 'weights' must be a list")
    if len(weights) != count:
        raise ValidationError(f"{what}: expected {count} weights, got {len(weights)}")
    out = []
    for i, x in enumerate(weights):
        if isinstance(x, bool) or not isinstance(x, (int, float, np.integer, np.floating)):
            raise ValidationError(f"{what}: weights[{i}] is not a number: {x!r}")
        x = float(x)
        if not math.isfinite(x):
            raise ValidationError(f"{what}: weights[{i}] is not finite")
        if x < 0:
            raise ValidationError(f"{what}: weights[{i}] = {x} is negative")
        out.append(x)
    return tuple(out)


def _check_id(x, bound: int, where: str) -> int:
    if isinstance(x, bool) or not isinstance(x, (int, np.integer)):
        raise ValidationError(f"{where}: id {x!r} is not an integer")
    if not 0 <= x < bound:
        raise ValidationError(f"{where}: id {x} out of range [0, {bound})")
    return int(x)


@dataclass(frozen=True)
class WeightedGraph:
    """Simple undirected graph with nonnegative vertex weights.

    Edges are stored normalized as ``(u, v)`` with ``u < v``, in input order.
    """

    n: int
    edges: tuple[tuple[int, int], ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        if isinstance(self.n, bool) or not isinstance(self.n, (int, np.integer)) or self.n < 0:
            raise ValidationError(f"graph: 'n' must be a nonnegative integer, got {self.n!r}")
        seen = set()
        norm = []
        for i, e in enumerate(self.edges):
            if len(e) != 2:
                raise ValidationError(f"graph: edges[{i}] must have two endpoints")
            u = _check_id(e[0], self.n, f"graph: edges[{i}]")
            v = _check_id(e[1], self.n, f"graph: edges[{i}]")
            if u == v:
                raise ValidationError(f"graph: edges[{i}] = [{u}, {v}] is a self-loop")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise ValidationError(f"graph: edges[{i}] = [{u}, {v}] duplicates an earlier edge")
            seen.add(key)
            norm.append(key)
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "edges", tuple(norm))
        object.__setattr__(self, "weights", _check_weights(self.weights, self.n, "graph"))

    @property
    def m(self) -> int:
        return len(self.edges)

    @cached_property
    def w(self) -> np.ndarray:
        a = np.array(self.weights, dtype=float)
        a.flags.writeable = False
        return a

    @cached_property
    def adjacency(self) -> tuple[tuple[int, ...], ...]:
        adj: list[list[int]] = [[] for _ in range(self.n)]
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        return tuple(tuple(sorted(a)) for a in adj)

    @cached_property
    def edge_array(self) -> np.ndarray:
        return np.array(self.edges, dtype=np.int64).reshape(-1, 2)

    def with_weights(self, weights) -> "WeightedGraph":
        return WeightedGraph(self.n, self.edges, tuple(float(x) for x in weights))

    def to_dict(self) -> dict:
        return {"n": self.n, "edges": [list(e) for e in self.edges], "weights": list(self.weights)}


@dataclass(frozen=True)
class SetSystem:
    """Universe ``{0..n_elements-1}`` with a weighted family of nonempty sets.

    ``s`` (max set size) and ``f`` (max element frequency) are recomputed here.
    """

    n_elements: int
    sets: tuple[tuple[int, ...], ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        n = self.n_elements
        if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 0:
            raise ValidationError(f"set system: 'n' must be a nonnegative integer, got {n!r}")
        norm = []
        for i, S in enumerate(self.sets):
            if len(S) == 0:
                raise ValidationError(f"set system: sets[{i}] is empty")
            ids = sorted({_check_id(e, n, f"set system: sets[{i}]") for e in S})
            if len(ids) != len(S):
                raise ValidationError(f"set system: sets[{i}] repeats an element")
            norm.append(tuple(ids))
        object.__setattr__(self, "n_elements", int(n))
        object.__setattr__(self, "sets", tuple(norm))
        object.__setattr__(self, "weights", _check_weights(self.weights, len(norm), "set system"))

    @property
    def m(self) -> int:
        return len(self.sets)

    @cached_property
    def s(self) -> int:
        return max((len(S) for S in self.sets), default=0)

    @cached_property
    def f(self) -> int:
        return max(self.frequency, default=0)

    @cached_property
    def frequency(self) -> tuple[int, ...]:
        cnt = [0] * self.n_elements
        for S in self.sets:
            for e in S:
                cnt[e] += 1
        return tuple(cnt)

    @cached_property
    def containing(self) -> tuple[tuple[int, ...], ...]:
        """For each element, the ids of the sets containing it."""
        out: list[list[int]] = [[] for _ in range(self.n_elements)]
        for i, S in enumerate(self.sets):
            for e in S:
                out[e].append(i)
        return tuple(tuple(x) for x in out)

    @cached_property
    def w(self) -> np.ndarray:
        a = np.array(self.weights, dtype=float)
        a.flags.writeable = False
        return a

    @cached_property
    def incidence(self) -> np.ndarray:
        """Dense 0/1 matrix, rows = elements, columns = sets."""
        A = np.zeros((self.n_elements, self.m))
        for j, S in enumerate(self.sets):
            A[list(S), j] = 1.0
        return A

    def is_coverable(self) -> bool:
        return all(self.frequency)

    def with_weights(self, weights) -> "SetSystem":
        return SetSystem(self.n_elements, self.sets, tuple(float(x) for x in weights))

    def to_dict(self) -> dict:
        return {"n": self.n_elements, "sets": [list(S) for S in self.sets], "weights": list(self.weights)}


# --------------------------------------------------------------------------
# JSON
# --------------------------------------------------------------------------

def _load(text: str, what: str, required: tuple[str, ...]) -> dict:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{what}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ParseError(f"{what}: top level must be a JSON object")
    for k in required:
        if k not in data:
            raise ParseError(f"{what}: missing field '{k}'")
    extra = set(data) - set(required) - {"meta"}
    if extra:
        raise ParseError(f"{what}: unknown field(s) {sorted(extra)}")
    if not isinstance(data[required[1]], list):
        raise ParseError(f"{what}: field '{required[1]}' must be a list")
    return data


def parse_graph(text: str) -> WeightedGraph:
    data = _load(text, "graph", ("n", "edges", "weights"))
    for i, e in enumerate(data["edges"]):
        if not isinstance(e, list):
            raise ParseError(f"graph: edges[{i}] must be a list")
    return WeightedGraph(data["n"], tuple(tuple(e) for e in data["edges"]), data["weights"])


def parse_set_system(text: str) -> SetSystem:
    data = _load(text, "set system", ("n", "sets", "weights"))
    for i, S in enumerate(data["sets"]):
        if not isinstance(S, list):
            raise ParseError(f"set system: sets[{i}] must be a list")
    return SetSystem(data["n"], tuple(tuple(S) for S in data["sets"]), data["weights"])


def parse_instance(text: str) -> WeightedGraph | SetSystem:
    """Dispatch on the presence of ``edges`` vs ``sets``."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"instance: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if isinstance(data, dict) and "sets" in data:
        return parse_set_system(text)
    return parse_graph(text)


def serialize(instance: WeightedGraph | SetSystem, meta: dict | None = None) -> str:
    d = instance.to_dict()
    if meta is not None:
        d["meta"] = meta
    return json.dumps(d, sort_keys=True)


# --------------------------------------------------------------------------
# Generators
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GeneratorConfig:
    """Seeded generator parameters.

    ``weights`` is ``("uniform", a, b)`` or ``("exponential", rate)``.
    Graph generation uses ``n`` and ``p``; set systems use ``n``, ``m``,
    ``s`` and ``f``.
    """

    seed: int
    n: int
    m: int = 0
    p: float = 0.5
    s: int = 3
    f: int = 3
    weights: tuple = field(default=("uniform", 1.0, 10.0))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["weights"] = list(self.weights)
        return d


def _rng(cfg: GeneratorConfig) -> np.random.Generator:
    return np.random.default_rng(int(cfg.seed) & ((1 << 64) - 1))


def _draw_weights(rng: np.random.Generator, spec: tuple, count: int) -> list[float]:
    kind = spec[0]
    if kind == "uniform":
        a, b = float(spec[1]), float(spec[2])
        if not 0 <= a <= b:
            raise ConfigError(f"uniform weights need 0 <= a <= b, got ({a}, {b})")
        return [float(x) for x in rng.uniform(a, b, size=count)]
    if kind == "exponential":
        rate = float(spec[1])
        if rate <= 0:
            raise ConfigError(f"exponential weights need rate > 0, got {rate}")
        return [float(x) for x in rng.exponential(1.0 / rate, size=count)]
    raise ConfigError(f"unknown weight distribution {kind!r}")


def gen_graph(cfg: GeneratorConfig) -> WeightedGraph:
    """Erdős–Rényi graph G(n, p) with i.i.d. vertex weights."""
    if not 0 <= cfg.p <= 1:
        raise ConfigError(f"edge probability must lie in [0, 1], got {cfg.p}")
    if cfg.n < 0:
        raise ConfigError("n must be nonnegative")
    rng = _rng(cfg)
    n = cfg.n
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.size) < cfg.p
    edges = tuple(zip(iu[keep].tolist(), ju[keep].tolist()))
    return WeightedGraph(n, edges, tuple(_draw_weights(rng, cfg.weights, n)))


def gen_set_system(cfg: GeneratorConfig) -> SetSystem:
    """Random coverable set system with set sizes <= s and frequencies <= f.

    The universe is first partitioned into ``ceil(n/s)`` random blocks (so
    every element is covered), then ``m - ceil(n/s)`` extra random sets are
    added among elements whose frequency is still below ``f``.
    """
    n, m, s, f = cfg.n, cfg.m, cfg.s, cfg.f
    if s < 1 or f < 1:
        raise ConfigError(f"need s >= 1 and f >= 1, got s={s}, f={f}")
    if n < 1:
        raise ConfigError("need at least one element")
    if m * s < n:
        raise ConfigError(f"infeasible: m*s = {m * s} < n = {n}")
    k = -(-n // s)
    # the covering blocks use one incidence per element; each extra set needs one more
    if m - k > n * (f - 1):
        raise ConfigError(f"infeasible: {m - k} extra sets exceed the n*(f-1) = {n * (f - 1)} free incidences")
    rng = _rng(cfg)
    perm = rng.permutation(n)
    sets = [tuple(sorted(int(e) for e in block)) for block in np.array_split(perm, k)]
    freq = np.ones(n, dtype=int)
    extra = m - k
    for j in range(extra):
        avail = np.flatnonzero(freq < f)
        # leave at least one free incidence for each remaining extra set
        room = int((f - freq).sum()) - (extra - j - 1)
        size = min(int(rng.integers(1, s + 1)), room)
        pick = rng.choice(avail, size=min(size, avail.size), replace=False)
        freq[pick] += 1
        sets.append(tuple(sorted(int(e) for e in pick)))
    order = rng.permutation(len(sets))
    sets = [sets[i] for i in order]
    return SetSystem(n, tuple(sets), tuple(_draw_weights(rng, cfg.weights, len(sets))))
