"""Toeplitz universal hashing, min-entropy and leftover-hash oracles.

Toeplitz convention: for an input of length n and output of length l the
seed has n + l - 1 bits, ``T[0][j] = seed[j]`` for j < n and
``T[i][0] = seed[n - 1 + i]``; every diagonal is constant.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DomainTooLarge, EmptyDistribution, LengthMismatch

# Exhaustive leftover-hash enumeration cap on (x, seed) pairs.
LHL_MAX_PAIRS = 2**22


@dataclass(frozen=True)
class HashParams:
    input_len: int
    output_len: int

    def __post_init__(self):
        if not 1 <= self.output_len <= self.input_len:
            raise ValueError("need 1 <= output_len <= input_len")

    @property
    def seed_len(self) -> int:
        return self.input_len + self.output_len - 1


@dataclass(frozen=True)
class HashSeed:
    bits: tuple

    @classmethod
    def of(cls, params: HashParams, bits) -> "HashSeed":
        bits = tuple(int(b) & 1 for b in _as_bits(bits))
        if len(bits) != params.seed_len:
            raise LengthMismatch(f"seed needs {params.seed_len} bits, got {len(bits)}")
        return cls(bits)

    @classmethod
    def random(cls, params: HashParams, rng) -> "HashSeed":
        return cls(tuple(int(b) for b in rng.integers(0, 2, params.seed_len)))

    def to_bytes(self) -> bytes:
        return bits_to_bytes(self.bits)

    @classmethod
    def from_bytes(cls, params: HashParams, data: bytes) -> "HashSeed":
        return cls.of(params, bytes_to_bits(data, params.seed_len))

    def array(self) -> np.ndarray:
        return np.array(self.bits, dtype=np.uint8)


def _as_bits(x) -> np.ndarray:
    if isinstance(x, str):
        return np.array([int(c) for c in x], dtype=np.uint8)
    return np.asarray(x, dtype=np.uint8).reshape(-1)


def bits_to_bytes(bits) -> bytes:
    """MSB-first packing, zero-padded to a byte boundary."""
    return np.packbits(np.asarray(bits, dtype=np.uint8)).tobytes()


def bytes_to_bits(data: bytes, n: int) -> np.ndarray:
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8))[:n]


def pad_input(x, input_len: int) -> np.ndarray:
    """Zero-pad a short input up to ``input_len``."""
    x = _as_bits(x)
    if x.size > input_len:
        raise LengthMismatch(f"input of {x.size} bits exceeds {input_len}")
    out = np.zeros(input_len, dtype=np.uint8)
    out[: x.size] = x
    return out


def toeplitz_matrix(params: HashParams, seed: HashSeed) -> np.ndarray:
    n, ell = params.input_len, params.output_len
    s = seed.array()
    i = np.arange(ell)[:, None]
    j = np.arange(n)[None, :]
    return s[np.where(j >= i, j - i, n - 1 + i - j)]


def hash_eval(params: HashParams, seed: HashSeed, x) -> np.ndarray:
    """``T(seed) @ x`` over GF(2); returns ``output_len`` bits."""
    x = _as_bits(x)
    if x.size != params.input_len:
        raise LengthMismatch(f"input needs {params.input_len} bits, got {x.size}")
    if len(seed.bits) != params.seed_len:
        raise LengthMismatch(f"seed needs {params.seed_len} bits, got {len(seed.bits)}")
    return kernels.toeplitz_hash(seed.array()[None, :], x[None, :], params.output_len)[0]


def hash_many(params: HashParams, seeds, xs) -> np.ndarray:
    """Row-wise hashing of aligned seed/input batches, shapes (B, seed_len) and (B, n)."""
    seeds = np.asarray(seeds, dtype=np.uint8)
    xs = np.asarray(xs, dtype=np.uint8)
    if seeds.shape[-1] != params.seed_len or xs.shape[-1] != params.input_len:
        raise LengthMismatch("seed or input width does not match params")
    lead = xs.shape[:-1]
    out = kernels.toeplitz_hash(seeds.reshape(-1, params.seed_len),
                                xs.reshape(-1, params.input_len), params.output_len)
    return out.reshape(*lead, params.output_len)


# --------------------------------------------------------------------------
# entropies


def _dist_array(dist) -> np.ndarray:
    p = np.array(list(dist.values()) if isinstance(dist, dict) else dist, dtype=float)
    if p.size == 0:
        raise EmptyDistribution("empty distribution")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("probabilities must be non-negative and sum to 1")
    return p


def min_entropy(dist) -> float:
    """``-log2 max_x Pr[X = x]``."""
    p = _dist_array(dist)
    return float(-math.log2(p.max())) + 0.0


def _joint_array(joint) -> np.ndarray:
    if isinstance(joint, dict):
        if not joint:
            raise EmptyDistribution("empty joint distribution")
        xs = sorted({k[0] for k in joint})
        ys = sorted({k[1] for k in joint})
        xi = {v: i for i, v in enumerate(xs)}
        yi = {v: i for i, v in enumerate(ys)}
        arr = np.zeros((len(xs), len(ys)))
        for (x, y), pr in joint.items():
            arr[xi[x], yi[y]] += pr
        joint = arr
    arr = np.asarray(joint, dtype=float)
    if arr.size == 0:
        raise EmptyDistribution("empty joint distribution")
    if arr.ndim == 1:
        arr = arr[:, None]
    if np.any(arr < 0) or abs(arr.sum() - 1.0) > 1e-9:
        raise ValueError("joint probabilities must be non-negative and sum to 1")
    return arr


def cond_guess_entropy(joint) -> float:
    """``-log2 max_{x,y} Pr[X=x | Y=y]`` over side information y of positive mass.

    ``joint`` is an array indexed ``[x, y]`` or a dict ``{(x, y): p}``.
    """
    arr = _joint_array(joint)
    py = arr.sum(axis=0)
    live = py > 0
    best = (arr[:, live] / py[live]).max()
    return float(-math.log2(best)) + 0.0


def lhl_bound(h_inf: float, ell: float) -> float:
    """Leftover-hash distance bound ``2^-(1 + (h_inf - ell) / 2)``."""
    return 2.0 ** (-(1.0 + 0.5 * (h_inf - ell)))


def index_bits(n: int) -> np.ndarray:
    """All n-bit strings, row ``i`` holding ``i`` MSB-first."""
    i = np.arange(2**n, dtype=np.int64)[:, None]
    return ((i >> np.arange(n - 1, -1, -1)) & 1).astype(np.uint8)


def lhl_empirical(params: HashParams, joint, max_pairs: int = LHL_MAX_PAIRS) -> float:
    """Exact distance of (seed, h(X), leak) from (seed, uniform, leak).

    ``joint[x, y]`` is indexed by the integer value of x (MSB-first) and the
    leak value y; a 1-D array means no leak.  Every seed is enumerated.
    """
    arr = _joint_array(joint)
    n, ell = params.input_len, params.output_len
    if arr.shape[0] > 2**n:
        raise ValueError("joint has more x values than 2^input_len")
    support = np.flatnonzero(arr.sum(axis=1) > 0)
    n_seeds = 2**params.seed_len
    if support.size * n_seeds > max_pairs:
        raise DomainTooLarge(f"{support.size * n_seeds} (x, seed) pairs exceed {max_pairs}")
    seeds = index_bits(params.seed_len)
    xs = index_bits(n)[support]
    table = kernels.toeplitz_table(seeds, xs, ell)  # (S, |support|)
    n_out = 2**ell
    flat = (np.arange(n_seeds)[:, None] * n_out + table).reshape(-1)
    total = 0.0
    for y in range(arr.shape[1]):
        w = arr[support, y]
        py = w.sum()
        if py == 0:
            continue
        q = np.bincount(flat, weights=np.broadcast_to(w, table.shape).reshape(-1),
                        minlength=n_seeds * n_out)
        total += np.abs(q - py / n_out).sum()
    return float(0.5 * total / n_seeds)


def flat_distribution(n: int, h_inf: int, rng=None) -> np.ndarray:
    """Uniform distribution over 2^h_inf of the 2^n strings (first ones, or random ones)."""
    if not 0 <= h_inf <= n:
        raise ValueError("need 0 <= h_inf <= n")
    p = np.zeros(2**n)
    idx = (np.arange(2**h_inf) if rng is None
           else rng.choice(2**n, size=2**h_inf, replace=False))
    p[idx] = 2.0**-h_inf
    return p
