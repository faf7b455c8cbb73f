"""Keyed shared randomness and stable samplers.

Every randomized routine in the package draws its uniforms from a
:class:`RandomTape` by *string key*, never by position. Two runs that share a
seed therefore consume identical randomness for identical logical decisions,
regardless of iteration order or of the weight vector they were given.

The pseudorandom function is Philox4x64-10 (a counter-based generator) keyed
by the 64-bit seed, with the counter block taken from a BLAKE2b digest of the
key string. A scalar pure-Python path and a vectorized numpy path compute the
same function; the numpy path evaluates one key across many seeds at once,
which is what the Monte Carlo audits need.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable

import numpy as np

_MASK64 = (1 << 64) - 1
_MUL0 = 0xD2E7470EE14C6C93
_MUL1 = 0xCA5A826395121157
_BUMP0 = 0x9E3779B97F4A7C15
_BUMP1 = 0xBB67AE8584CAA73B
_ROUNDS = 10
_INV53 = 1.0 / (1 << 53)

# a ratio-sampler round accepts with probability (c-1)/(c ln c); for c <= 100
# that is above 0.2, so 400 straight rejections has probability below 1e-38
MAX_RATIO_ROUNDS = 400


# --------------------------------------------------------------------------
# Philox4x64-10
# --------------------------------------------------------------------------

def philox4x64(counter: tuple[int, int, int, int], key: tuple[int, int]) -> tuple[int, int, int, int]:
    """One Philox4x64-10 block in pure Python integer arithmetic."""
    c0, c1, c2, c3 = counter
    k0, k1 = key
    for r in range(_ROUNDS):
        if r:
            k0 = (k0 + _BUMP0) & _MASK64
            k1 = (k1 + _BUMP1) & _MASK64
        p0 = _MUL0 * c0
        p1 = _MUL1 * c2
        c0, c1, c2, c3 = (
            (p1 >> 64) ^ c1 ^ k0,
            p1 & _MASK64,
            (p0 >> 64) ^ c3 ^ k1,
            p0 & _MASK64,
        )
    return c0, c1, c2, c3


_LO32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)


def _mulhilo(a: np.uint64, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # 64x64 -> 128 bit product from 32-bit limbs; uint64 arithmetic wraps
    a_lo = a & _LO32
    a_hi = a >> _S32
    b_lo = b & _LO32
    b_hi = b >> _S32
    ll = a_lo * b_lo
    lh = a_lo * b_hi
    hl = a_hi * b_lo
    hh = a_hi * b_hi
    mid = (ll >> _S32) + (lh & _LO32) + (hl & _LO32)
    hi = hh + (lh >> _S32) + (hl >> _S32) + (mid >> _S32)
    lo = a * b
    return hi, lo


def philox4x64_np(counter: tuple, key0: np.ndarray, key1=0) -> tuple[np.ndarray, ...]:
    """Vectorized Philox4x64-10; any argument may be an array (broadcast)."""
    with np.errstate(over="ignore"):
        c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) for c in counter)
        k0 = np.asarray(key0, dtype=np.uint64)
        k1 = np.asarray(key1, dtype=np.uint64)
        m0 = np.uint64(_MUL0)
        m1 = np.uint64(_MUL1)
        for r in range(_ROUNDS):
            if r:
                k0 = k0 + np.uint64(_BUMP0)
                k1 = k1 + np.uint64(_BUMP1)
            hi0, lo0 = _mulhilo(m0, c0)
            hi1, lo1 = _mulhilo(m1, c2)
            c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


@lru_cache(maxsize=1 << 16)
def key_block(key: str) -> tuple[int, int, int, int]:
    """Counter block for a string key (BLAKE2b digest split into 4 words)."""
    d = hashlib.blake2b(key.encode("utf-8"), digest_size=32, person=b"lipcover-tape").digest()
    return tuple(int.from_bytes(d[8 * i: 8 * i + 8], "little") for i in range(4))


def _seed_word(seed: int) -> int:
    return int(seed) & _MASK64


# --------------------------------------------------------------------------
# Tape
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RandomTape:
    """Immutable keyed source of uniforms in [0, 1).

    ``RandomTape(seed).uniform(key)`` is a pure function of ``(seed, key)``.
    """

    seed: int

    def uniform(self, key: str) -> float:
        out = philox4x64(key_block(key), (_seed_word(self.seed), 0))
        return (out[0] >> 11) * _INV53

    def uniforms(self, keys: Iterable[str]) -> np.ndarray:
        """Vectorized over keys for a single seed."""
        blocks = np.array([key_block(k) for k in keys], dtype=np.uint64).reshape(-1, 4)
        out = philox4x64_np(tuple(blocks.T), _seed_word(self.seed))
        return (out[0] >> np.uint64(11)).astype(np.float64) * _INV53


def tape_uniform(tape: RandomTape, key: str) -> float:
    return tape.uniform(key)


def seed_array(seeds) -> np.ndarray:
    """Seeds as uint64 words (negative seeds wrap modulo 2**64)."""
    seeds = np.asarray(seeds)
    if seeds.dtype == np.uint64:
        return seeds
    return np.array([_seed_word(int(s)) for s in seeds.ravel()], dtype=np.uint64).reshape(seeds.shape)


def batch_uniform(seeds, key: str) -> np.ndarray:
    """``tape_uniform(RandomTape(s), key)`` for every seed ``s`` in ``seeds``."""
    words = seed_array(seeds)
    out = philox4x64_np(key_block(key), words)
    return (out[0] >> np.uint64(11)).astype(np.float64) * _INV53


def batch_uniforms(seeds, keys: list[str]) -> np.ndarray:
    """Matrix of shape (len(seeds), len(keys))."""
    words = seed_array(seeds)[:, None]
    if not keys:
        return np.zeros((words.shape[0], 0))
    blocks = np.array([key_block(k) for k in keys], dtype=np.uint64)
    out = philox4x64_np(tuple(blocks[:, i][None, :] for i in range(4)), words)
    return (out[0] >> np.uint64(11)).astype(np.float64) * _INV53


# --------------------------------------------------------------------------
# Stable samplers
# --------------------------------------------------------------------------

def sample_fixed(l: float, r: float, tape: RandomTape, key: str) -> float:
    """Uniform on ``[l, r]`` for interval ends that do not depend on weights.

    Outputs for two weight vectors under the same tape are identical, so the
    sampler never contributes to output disagreement.
    """
    if l > r:
        raise ValueError(f"sample_fixed: empty interval l={l} > r={r}")
    return l + tape.uniform(key) * (r - l)


def _check_ratio(l: float, c: float) -> None:
    if not (c > 1) or not math.isfinite(c):
        raise ValueError(f"sample_ratio: need c > 1, got {c}")
    if not (l > 0) or not math.isfinite(l):
        raise ValueError(f"sample_ratio: need l > 0, got {l}")


def _anchor(l, c, b):
    # smallest point of the grid {c**(j + b) : j integer} that is >= l
    lc = np.log(l) / math.log(c)
    e = np.ceil(lc - b) + b
    a = np.power(c, e)
    # guard the grid boundary against rounding in log/pow
    a = np.where(a < l, a * c, a)
    a = np.where(a >= c * l, a / c, a)
    return a


def sample_ratio(l: float, c: float, tape: RandomTape, key_prefix: str) -> float:
    """Uniform on ``[l, c*l]`` via anchor-cascade rejection.

    Round ``k`` draws an anchor that is log-uniform on ``[l, c*l)`` from a
    grid whose offset is shared across weight vectors, and accepts it with
    probability ``a / (c*l)``. An accepted anchor is exactly uniform. Two
    runs with nearby ``l`` agree unless a grid point or the acceptance
    threshold falls between them, which has probability ``O(|l - l'| / l)``.
    """
    _check_ratio(l, c)
    for k in range(1, MAX_RATIO_ROUNDS + 1):
        b = tape.uniform(f"{key_prefix}/round={k}/b")
        u = tape.uniform(f"{key_prefix}/round={k}/u")
        a = float(_anchor(l, c, b))
        if u * c * l < a:
            return a
    raise RuntimeError("sample_ratio: rejection cascade did not terminate")


def batch_sample_ratio(l: float, c: float, seeds, key_prefix: str) -> np.ndarray:
    """Vectorized :func:`sample_ratio` over seeds (same values as the scalar path)."""
    _check_ratio(l, c)
    words = seed_array(seeds)
    out = np.full(words.shape, np.nan)
    pending = np.arange(words.size)
    for k in range(1, MAX_RATIO_ROUNDS + 1):
        if pending.size == 0:
            return out
        sw = words[pending]
        b = batch_uniform(sw, f"{key_prefix}/round={k}/b")
        u = batch_uniform(sw, f"{key_prefix}/round={k}/u")
        a = _anchor(l, c, b)
        acc = u * c * l < a
        out[pending[acc]] = a[acc]
        pending = pending[~acc]
    if pending.size:
        raise RuntimeError("sample_ratio: rejection cascade did not terminate")
    return out


def ratio_tv(l: float, l2: float, c: float) -> float:
    """Total variation distance between U[l, c l] and U[l2, c l2]."""
    lo, hi = min(l, l2), max(l, l2)
    if lo == hi:
        return 0.0
    return c * (hi - lo) / ((c - 1) * hi) if hi < c * lo else 1.0


@dataclass(frozen=True)
class StableSamplerSpec:
    """Interval descriptor for a stable sampler.

    ``kind="fixed"`` samples ``U[l, r]`` with weight-independent ends;
    ``kind="ratio"`` samples ``U[l, c*l]`` where ``l`` may depend on weights.
    """

    kind: str
    l: float
    r: float | None = None
    c: float | None = None

    def __post_init__(self):
        if self.kind == "fixed":
            if self.r is None or not self.l <= self.r:
                raise ValueError(f"fixed interval needs l <= r, got l={self.l}, r={self.r}")
        elif self.kind == "ratio":
            _check_ratio(self.l, self.c if self.c is not None else math.nan)
        else:
            raise ValueError(f"unknown sampler kind {self.kind!r}")

    def sample(self, tape: RandomTape, key: str) -> float:
        if self.kind == "fixed":
            return sample_fixed(self.l, self.r, tape, key)
        return sample_ratio(self.l, self.c, tape, key)
