"""Seeded randomness: root-seed splitting and per-lane counter-mode streams.

A ``LaneRng`` gives every lane of a batched protocol its own keystream, so a
lane's draws depend only on that lane's key.  This is what lets the
equivocator re-run individual lanes without disturbing the others.
"""
from __future__ import annotations

import hashlib
import struct

import numpy as np

from . import kernels

_DRAW = 0
_EXPAND = 1


def derive_seed(root: int, *path) -> int:
    """Deterministic 64-bit child seed from a root seed and a label path."""
    h = hashlib.blake2b(digest_size=8)
    h.update(struct.pack(">Q", int(root) & 0xFFFFFFFFFFFFFFFF))
    for p in path:
        h.update(b"\x1f" + str(p).encode())
    return int.from_bytes(h.digest(), "big")


def generator(root: int, *path) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root, *path))


def _stream_id(stream: int, tag) -> int:
    return derive_seed(stream, "stream", tag)


class LaneRng:
    """Independent Philox keystreams, one per lane."""

    __slots__ = ("keys", "stream", "_ctr")

    def __init__(self, keys, stream: int = 0):
        self.keys = np.ascontiguousarray(keys, dtype=np.uint64).reshape(-1, 2)
        self.stream = int(stream) & 0xFFFFFFFFFFFFFFFF
        self._ctr = 0

    @classmethod
    def from_generator(cls, gen: np.random.Generator, lanes: int, stream: int = 0) -> "LaneRng":
        keys = gen.integers(0, 2**64, size=(lanes, 2), dtype=np.uint64, endpoint=False)
        return cls(keys, stream)

    @classmethod
    def from_seed(cls, seed: int, lanes: int, *path) -> "LaneRng":
        """Keys derived from (seed, path): anyone holding the seed can rebuild the streams."""
        base = derive_seed(seed, "lanes", *path)
        key = np.array([[base, derive_seed(base, "k1")]], dtype=np.uint64)
        ctr = np.array([0, 0, 2, 0], dtype=np.uint64)
        nblocks = -(-lanes // 2)
        words = kernels.philox_blocks(key, ctr, nblocks).reshape(-1, 2)[:lanes]
        return cls(words, derive_seed(base, "stream"))

    @property
    def lanes(self) -> int:
        return self.keys.shape[0]

    def words(self, k: int) -> np.ndarray:
        """(lanes, k) uint64 words."""
        nblocks = max(1, -(-k // 4))
        ctr = np.array([self._ctr, self.stream, _DRAW, 0], dtype=np.uint64)
        self._ctr += nblocks
        return kernels.philox_blocks(self.keys, ctr, nblocks)[:, :k]

    def bits(self, k: int) -> np.ndarray:
        """(lanes, k) uint8 uniform bits."""
        if k == 0:
            return np.zeros((self.lanes, 0), dtype=np.uint8)
        w = self.words(-(-k // 64))
        b = np.unpackbits(w.view(np.uint8), axis=1, bitorder="little")
        return b[:, :k]

    def packed(self, k: int) -> np.ndarray:
        """(lanes, ceil(k/8)) uniform bytes: k MSB-first bits per row, padding bits zero."""
        nbytes = -(-k // 8)
        raw = self.words(-(-nbytes // 8)).view(np.uint8)
        if raw.shape[1] != nbytes:
            raw = raw[:, :nbytes].copy()
        if k % 8:
            raw[:, -1] &= np.uint8((0xFF << (8 - k % 8)) & 0xFF)
        return raw

    def uniform(self, k: int) -> np.ndarray:
        return (self.words(k) >> np.uint64(11)).astype(np.float64) * (1.0 / 2**53)

    def subsets(self, n: int, t: int) -> np.ndarray:
        """(lanes, t) sorted index sets, each uniform among t-subsets of range(n)."""
        order = np.argsort(self.words(n), axis=1, kind="stable")[:, :t]
        return np.sort(order, axis=1)

    def child(self, tag) -> "LaneRng":
        """Fresh stream over the same keys, separated by ``tag``."""
        return LaneRng(self.keys, _stream_id(self.stream, tag))

    def subset(self, idx) -> "LaneRng":
        """The same streams restricted to some lanes; draws match the parent's."""
        out = LaneRng(self.keys[np.asarray(idx)], self.stream)
        out._ctr = self._ctr
        return out

    def take(self, idx, tag="take") -> "LaneRng":
        """Sub-lane generator on a separate stream."""
        return LaneRng(self.keys[np.asarray(idx)], _stream_id(self.stream, tag))

    def expand(self, m: int, tag="expand") -> "LaneRng":
        """Derive ``m`` sub-lanes per lane (lane-major order), each keyed from its parent."""
        sid = _stream_id(self.stream, tag)
        ctr = np.array([0, sid, _EXPAND, 0], dtype=np.uint64)
        blocks = kernels.philox_blocks(self.keys, ctr, m).reshape(self.lanes, m, 4)
        return LaneRng(blocks[:, :, :2].reshape(-1, 2), sid)

    def rekey(self, idx, new_keys) -> None:
        self.keys = self.keys.copy()
        self.keys[np.asarray(idx)] = new_keys
