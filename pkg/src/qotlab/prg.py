"""Length-tripling generators pluggable into the Naor commitment.

``PrgSpec.expand`` maps a batch of seeds, shape (B, s) bits, to (B, 3s) bits.
The stream generator here is a counter-mode Philox keystream; the toy
generators are small enough for exhaustive binding audits.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import kernels

SECURE = "secure-stream"
TOY = "toy-exhaustive"

_TAG = 0x4E414F52  # keystream domain tag


@dataclass(frozen=True)
class PrgSpec:
    seed_len: int
    expand: Callable[[np.ndarray], np.ndarray]
    kind: str = SECURE
    name: str = "prg"
    # optional fast path on MSB-first packed rows; must agree with ``expand``
    expand_packed: Callable[[np.ndarray], np.ndarray] | None = None

    @property
    def out_len(self) -> int:
        return 3 * self.seed_len

    def __call__(self, seeds) -> np.ndarray:
        seeds = np.atleast_2d(np.asarray(seeds, dtype=np.uint8))
        out = self.expand(seeds)
        if out.shape != (seeds.shape[0], self.out_len):
            raise ValueError(f"{self.name} produced shape {out.shape}")
        return out

    def packed(self, seeds_packed) -> np.ndarray:
        """Same map on packed rows: (B, ceil(s/8)) bytes to (B, ceil(3s/8)) bytes."""
        seeds_packed = np.atleast_2d(np.asarray(seeds_packed, dtype=np.uint8))
        if self.expand_packed is not None:
            return self.expand_packed(seeds_packed)
        bits = np.unpackbits(seeds_packed, axis=1)[:, : self.seed_len]
        return np.packbits(self(bits), axis=1)


def _key_words(seeds_packed: np.ndarray) -> np.ndarray:
    """Packed seed bytes as (B, k) uint64 words (k even, zero-padded)."""
    B, nbytes = seeds_packed.shape
    if nbytes % 16 == 0 and seeds_packed.flags.c_contiguous:
        return seeds_packed.view(np.uint64)
    nwords = max(2, 2 * -(-nbytes // 16))
    buf = np.zeros((B, nwords * 8), dtype=np.uint8)
    buf[:, :nbytes] = seeds_packed
    return buf.view(np.uint64)


def stream_prg(seed_len: int = 128) -> PrgSpec:
    """Counter-mode keystream keyed by the seed; seeds over 128 bits are chained into the key.

    Output bit i is bit (7 - i % 8) of keystream byte i // 8.
    """
    nbits = 3 * seed_len
    nbytes = -(-nbits // 8)

    def expand_packed(seeds_packed):
        words = _key_words(seeds_packed)
        key = np.ascontiguousarray(words[:, :2])
        for k in range(2, words.shape[1], 2):
            mixed = kernels.philox_blocks(key, np.array([k, _TAG, 1, 0], dtype=np.uint64), 1)
            key = np.ascontiguousarray(mixed[:, :2] ^ words[:, k:k + 2])
        nblocks = -(-nbytes // 32)
        stream = kernels.philox_blocks(key, np.array([0, _TAG, 0, 0], dtype=np.uint64), nblocks)
        out = stream.view(np.uint8)[:, :nbytes]
        if nbits % 8:
            out = out.copy()
            out[:, -1] &= np.uint8((0xFF << (8 - nbits % 8)) & 0xFF)
        return out

    def expand(seeds):
        return np.unpackbits(expand_packed(np.packbits(seeds, axis=1)), axis=1)[:, :nbits]

    return PrgSpec(seed_len, expand, SECURE, f"stream-{seed_len}", expand_packed)


def repeat_prg(seed_len: int) -> PrgSpec:
    """G(s) = s || s || s (toy, not pseudorandom)."""
    return PrgSpec(seed_len, lambda s: np.tile(s, 3), TOY, f"repeat-{seed_len}")


def _seed_index(seeds: np.ndarray) -> np.ndarray:
    w = 1 << np.arange(seeds.shape[1] - 1, -1, -1, dtype=np.int64)
    return seeds.astype(np.int64) @ w


def table_prg(table, seed_len: int, name: str = "table") -> PrgSpec:
    """Generator given by an explicit (2^s, 3s) output table, rows indexed MSB-first."""
    table = np.asarray(table, dtype=np.uint8)
    if table.shape != (2**seed_len, 3 * seed_len):
        raise ValueError("table must have shape (2^s, 3s)")
    return PrgSpec(seed_len, lambda s: table[_seed_index(s)], TOY, name)


def random_function_prg(seed_len: int, seed: int = 0) -> PrgSpec:
    rng = np.random.default_rng(seed)
    return table_prg(rng.integers(0, 2, (2**seed_len, 3 * seed_len), dtype=np.uint8),
                     seed_len, f"random-function-{seed_len}")


def random_injective_prg(seed_len: int, seed: int = 0) -> PrgSpec:
    rng = np.random.default_rng(seed)
    vals = rng.choice(2 ** (3 * seed_len), size=2**seed_len, replace=False)
    shifts = np.arange(3 * seed_len - 1, -1, -1)
    table = ((vals[:, None] >> shifts) & 1).astype(np.uint8)
    return table_prg(table, seed_len, f"random-injective-{seed_len}")


def get(name: str, seed_len: int | None = None) -> PrgSpec:
    """Lookup by short name: stream, repeat, random, injective."""
    if name == "stream":
        return stream_prg(seed_len or 128)
    if name == "repeat":
        return repeat_prg(seed_len or 4)
    if name == "random":
        return random_function_prg(seed_len or 4)
    if name == "injective":
        return random_injective_prg(seed_len or 4)
    raise KeyError(f"unknown PRG {name!r}")
