"""Naor bit commitment from a length-tripling generator.

The receiver sends a random u of 3s bits; the committer answers
c = G(seed) xor (b * u) and later opens with (seed, b).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import transport as tp
from .engine import CommitEngine, Ctx, decode_sel, encode_sel, pick
from .errors import DomainTooLarge, LengthMismatch
from .prg import TOY, PrgSpec, stream_prg
from .transport import Decoder, Encoder, MsgType

AUDIT_MAX_SEED = 8


def _bits(x, n=None) -> np.ndarray:
    if isinstance(x, str):
        x = [int(c) for c in x]
    arr = np.asarray(x, dtype=np.uint8).reshape(-1)
    if n is not None and arr.size != n:
        raise LengthMismatch(f"expected {n} bits, got {arr.size}")
    return arr


def naor_first(rng: np.random.Generator, prg: PrgSpec) -> np.ndarray:
    """Receiver's first message: 3s uniform bits."""
    return rng.integers(0, 2, prg.out_len, dtype=np.uint8)


def naor_commit(prg: PrgSpec, u, b: int, seed) -> np.ndarray:
    u = _bits(u, prg.out_len)
    seed = _bits(seed, prg.seed_len)
    return prg(seed[None, :])[0] ^ (u * np.uint8(b & 1))


def naor_verify(prg: PrgSpec, u, c, opening) -> tuple[bool, int | None]:
    """``(True, b)`` when ``opening = (seed, b)`` reproduces ``c``, else ``(False, None)``."""
    seed, b = opening
    try:
        ok = np.array_equal(naor_commit(prg, u, int(b), seed), _bits(c, prg.out_len))
    except LengthMismatch:
        return False, None
    return (True, int(b) & 1) if ok else (False, None)


# --------------------------------------------------------------------------
# binding audit for toy generators


@dataclass
class BindingAudit:
    bad_u_count: int
    total_u: int
    examples: list  # (u, seed0, seed1) triples as bit strings

    @property
    def fraction(self) -> float:
        return self.bad_u_count / self.total_u

    def as_dict(self) -> dict:
        return {"bad_u_count": self.bad_u_count, "total_u": self.total_u,
                "fraction": self.fraction, "examples": self.examples}


def _to_int(rows: np.ndarray) -> np.ndarray:
    w = 1 << np.arange(rows.shape[1] - 1, -1, -1, dtype=np.int64)
    return rows.astype(np.int64) @ w


def _to_str(v: int, n: int) -> str:
    return format(int(v), f"0{n}b")


def binding_audit(prg: PrgSpec, max_examples: int = 4) -> BindingAudit:
    """Count the u for which some seed pair opens the same c both ways (u = G(s0) xor G(s1))."""
    if prg.kind != TOY:
        raise ValueError("binding audit needs a toy-exhaustive generator")
    s = prg.seed_len
    if s > AUDIT_MAX_SEED:
        raise DomainTooLarge(f"seed length {s} exceeds {AUDIT_MAX_SEED}")
    from .hashing import index_bits

    outs = _to_int(prg(index_bits(s)))
    diffs = outs[:, None] ^ outs[None, :]
    bad, first = np.unique(diffs.reshape(-1), return_index=True)
    examples = []
    for u, k in zip(bad[:max_examples], first[:max_examples]):
        s0, s1 = divmod(int(k), 2**s)
        examples.append((_to_str(u, 3 * s), _to_str(s0, s), _to_str(s1, s)))
    return BindingAudit(int(bad.size), 2 ** (3 * s), examples)


# --------------------------------------------------------------------------
# batched engine


@dataclass
class NaorCommitter:
    """Committer lanes; ``seeds``, ``u`` and ``c`` are MSB-first packed rows."""

    bits: np.ndarray   # (L,)
    seeds: np.ndarray  # (L, ceil(s/8))
    u: np.ndarray      # (L, ceil(3s/8))
    c: np.ndarray


@dataclass
class NaorReceiver:
    u: np.ndarray
    c: np.ndarray


def _mask_rows(bits) -> np.ndarray:
    return (np.asarray(bits, dtype=np.uint8) * np.uint8(0xFF))[:, None]


class NaorEngine(CommitEngine):
    name = "naor"

    def __init__(self, prg: PrgSpec | None = None, transparent: bool = False):
        self.prg = prg or stream_prg()
        self.transparent = transparent

    def describe(self) -> str:
        return f"naor[{self.prg.name}]"

    def _recv_rows(self, msg_type, lanes):
        msg = yield from tp.recv(msg_type)
        d = Decoder(msg.payload)
        rows, nbits = d.rows()
        d.done()
        if rows.shape[0] != lanes or nbits != self.prg.out_len:
            raise tp_violation("row shape", (rows.shape[0], nbits), (lanes, self.prg.out_len))
        return rows

    def commit_r(self, lanes, rng, ctx=Ctx()):
        u = rng.packed(self.prg.out_len)
        yield ctx.msg(MsgType.NAOR_FIRST, Encoder().rows(u, self.prg.out_len).done())
        c = yield from self._recv_rows(MsgType.NAOR_COMMIT, lanes)
        return NaorReceiver(u, c)

    def commit_c(self, bits, rng, ctx=Ctx()):
        bits = np.asarray(bits, dtype=np.uint8).reshape(-1)
        u = yield from self._recv_rows(MsgType.NAOR_FIRST, bits.size)
        seeds = rng.packed(self.prg.seed_len)
        c = self.prg.packed(seeds) ^ (u & _mask_rows(bits))
        yield ctx.msg(MsgType.NAOR_COMMIT, Encoder().rows(c, self.prg.out_len).done())
        return NaorCommitter(bits, seeds, u, c)

    def open_c(self, states, sel, ctx=Ctx(), claim=None):
        """Open per lane; ``claim`` overrides the announced bits (cheating committers)."""
        sel = np.asarray(sel, dtype=np.int64)
        idx = np.maximum(sel, 0)
        bits = pick([s.bits for s in states], idx)
        seeds = pick([s.seeds for s in states], idx)
        if claim is not None:
            bits = np.asarray(claim, dtype=np.uint8)
        live = sel >= 0
        bits = np.where(live, bits, 0).astype(np.uint8)
        seeds = seeds & _mask_rows(live)
        payload = (Encoder().ints(encode_sel(sel)).bits(bits)
                   .rows(seeds, self.prg.seed_len).done())
        yield ctx.msg(MsgType.EQ_OPEN, payload)

    def open_r(self, states, allowed, ctx=Ctx()):
        msg = yield from tp.recv(MsgType.EQ_OPEN)
        d = Decoder(msg.payload)
        sel = decode_sel(d.ints())
        bits = d.bits()
        seeds, nbits = d.rows()
        d.done()
        L = states[0].u.shape[0]
        if sel.shape != (L,) or bits.shape != (L,) or seeds.shape[0] != L \
                or nbits != self.prg.seed_len:
            raise tp_violation("opening shape", sel.shape, (L,))
        allowed = np.asarray(allowed, dtype=bool).reshape(L, -1)
        in_range = (sel >= 0) & (sel < len(states))
        idx = np.where(in_range, sel, 0)
        ok = in_range & allowed[np.arange(L), np.minimum(idx, allowed.shape[1] - 1)]
        u = pick([s.u for s in states], idx)
        c = pick([s.c for s in states], idx)
        expect = self.prg.packed(seeds) ^ (u & _mask_rows(bits))
        ok &= np.all(expect == c, axis=1)
        return sel, bits, ok

    def extract_r(self, lanes, rng, ctx=Ctx(), model=None):
        """Receiver that also recovers the bits, given the committer's keystream.

        Lanes whose commitment does not match the predicted seed give -1.
        """
        st = yield from self.commit_r(lanes, rng, ctx)
        if model is None:
            return st, np.full(lanes, -1, dtype=np.int64)
        g = self.prg.packed(model.packed(self.prg.seed_len))
        zero = np.all(g == st.c, axis=1)
        one = np.all((g ^ st.u) == st.c, axis=1)
        return st, np.where(zero, 0, np.where(one, 1, -1)).astype(np.int64)

    def committed(self, state):
        if not self.transparent:
            return super().committed(state)
        return state.bits

    def fingerprint(self, rstate):
        return (rstate.c[:, 0] >> 7).astype(np.uint8)


def tp_violation(what, got, want):
    from .errors import ProtocolViolation

    return ProtocolViolation(f"{what}: got {got}, expected {want}")
