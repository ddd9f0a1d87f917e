"""Equivocality compiler over any batched base commitment engine.

Per iteration the committer makes four base commitments in the order
(0,0), (0,1), (1,0), (1,1); pair j holds the bit d_j twice.  The receiver
challenges with c and the committer opens pair c, which must agree.  After
all iterations the committer sends hints e_i = b xor d_{i,1-c_i}.  To open,
the committer announces b and, per iteration, opens one session of the
unopened pair; its bit must equal b xor e_i.

The equivocator arranges each iteration so that the pair it expects to be
challenged holds (z, z) and the other pair holds (d, 1 - d), re-running a
lane with fresh coins until the receiver's challenge matches.  Receivers are
re-run through a white-box shadow (their keystream plus challenge rule),
which is exactly rewinding for classical receivers.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import transport as tp
from .engine import CommitEngine, Ctx, decode_sel, encode_sel, pick, sel_all
from .errors import ProtocolViolation, ReceiverAbort, RetryBudgetExceeded
from .rng import LaneRng
from .transport import Decoder, Encoder, MsgType, run_pair

_HINTS = 1
_CLAIM = 2

BOT = -1  # no value (the "bottom" outcome)


# --------------------------------------------------------------------------
# receiver challenge rules (classical)


class UniformChallenger:
    name = "uniform"

    def __call__(self, i, rng, rstates, base):
        return rng.bits(1)[:, 0]


class ConstantChallenger:
    def __init__(self, value: int = 0):
        self.value = value & 1
        self.name = f"constant-{self.value}"

    def __call__(self, i, rng, rstates, base):
        return np.full(rng.lanes, self.value, dtype=np.uint8)


class FingerprintChallenger:
    """Challenge computed from the received commitments only (no coins)."""

    name = "fingerprint"

    def __call__(self, i, rng, rstates, base):
        return (base.fingerprint(rstates[0]) ^ base.fingerprint(rstates[3])).astype(np.uint8)


CHALLENGERS = {"uniform": UniformChallenger, "constant": ConstantChallenger,
               "fingerprint": FingerprintChallenger}


# --------------------------------------------------------------------------
# committer scripts: what goes into the four sessions and the hints


class HonestScript:
    name = "honest"

    def session_bits(self, i, b, rng: LaneRng) -> np.ndarray:
        d = rng.bits(2)
        return np.stack([d[:, 0], d[:, 0], d[:, 1], d[:, 1]])

    def hints(self, b, sess_bits, c) -> np.ndarray:
        lanes = np.arange(c.shape[1])
        unopened = np.stack([sess_bits[i, 2 * (1 - c[i]), lanes] for i in range(c.shape[0])])
        return unopened ^ b[None, :]


class MismatchScript(HonestScript):
    """Pairs flagged in ``pattern`` (shape (2,) or (iterations, 2)) hold (d, 1 - d)."""

    def __init__(self, pattern, name: str = "mismatch"):
        self.pattern = np.asarray(pattern, dtype=np.uint8)
        self.name = name

    def session_bits(self, i, b, rng):
        d = rng.bits(2)
        m = self.pattern if self.pattern.ndim == 1 else self.pattern[i]
        return np.stack([d[:, 0], d[:, 0] ^ m[0], d[:, 1], d[:, 1] ^ m[1]])


def all_mismatched() -> MismatchScript:
    return MismatchScript([1, 1], "all-mismatched")


def one_mismatched(pair: int = 1) -> MismatchScript:
    return MismatchScript([1 - pair, pair] if pair in (0, 1) else [0, 0], f"mismatch-pair-{pair}")


class RandomMismatchScript(HonestScript):
    """Each iteration mismatches exactly one pair, chosen by the committer's coins."""

    name = "random-one-mismatched"

    def session_bits(self, i, b, rng):
        d = rng.bits(3)
        m = d[:, 2]
        return np.stack([d[:, 0], d[:, 0] ^ (1 - m), d[:, 1], d[:, 1] ^ m])


# --------------------------------------------------------------------------
# states


@dataclass
class EqCommitter:
    b: np.ndarray | None        # (L,); None for an equivocal commitment
    sess_bits: np.ndarray       # (iterations, 4, L)
    sessions: list              # per iteration, four base committer states
    c: np.ndarray               # (iterations, L)
    e: np.ndarray               # (iterations, L)
    open_rng: LaneRng
    attempts: np.ndarray | None = None  # equivocator: tries until the challenge matched


@dataclass
class EqReceiver:
    sessions: list
    c: np.ndarray               # (iterations, L)
    opened: np.ndarray          # (iterations, 2, L) the two bits of the challenged pair
    aborted: np.ndarray         # (L,)
    first_fail: np.ndarray      # (L,) iteration of the first failed check, -1 if none
    e: np.ndarray | None = None
    extracted: np.ndarray | None = None  # (iterations, 2, L) base-extracted d'_{i,j}, -1 = none
    decommit: dict = field(default_factory=dict)


def _decode_bits(msg) -> np.ndarray:
    d = Decoder(msg.payload)
    out = d.bits()
    d.done()
    return out


class EquivEngine(CommitEngine):
    name = "equiv"

    def __init__(self, base: CommitEngine, lam: int, challenger=None, strict: bool = True):
        if lam < 1:
            raise ValueError("need at least one iteration")
        self.base = base
        self.lam = lam
        self.challenger = challenger or UniformChallenger()
        self.strict = strict

    def describe(self) -> str:
        return f"equiv[{self.base.describe()}, iterations={self.lam}]"

    # ---------------------------------------------------------------- commit

    def _c_sessions(self, i, sb, it_rng, ctx):
        states = []
        for k in range(4):
            st = yield from self.base.commit_c(sb[k], it_rng.child(k), ctx.at(i, k))
            states.append(st)
        c = _decode_bits((yield from tp.recv(MsgType.EQ_CHALLENGE)))
        if c.shape != (sb.shape[1],) or np.any(c > 1):
            raise ProtocolViolation("bad challenge")
        return states, c

    def _c_open_pair(self, i, states, c, ctx):
        c = c.astype(np.int64)
        yield from self.base.open_c(states, 2 * c, ctx.at(i, 0))
        yield from self.base.open_c(states, 2 * c + 1, ctx.at(i, 1))

    def _r_sessions(self, i, lanes, it_rng, ctx, model=None):
        states, ext = [], []
        for k in range(4):
            if model is None:
                st = yield from self.base.commit_r(lanes, it_rng.child(k), ctx.at(i, k))
            else:
                st, x = yield from self.base.extract_r(lanes, it_rng.child(k), ctx.at(i, k),
                                                       model.child(k))
                ext.append(x)
            states.append(st)
        c = np.asarray(self.challenger(i, it_rng.child("chal"), states, self.base), dtype=np.uint8)
        yield ctx.at(i).msg(MsgType.EQ_CHALLENGE, Encoder().bits(c).done())
        return states, c, ext

    def _r_check(self, i, states, c, ctx):
        L = c.size
        lanes = np.arange(L)
        c = c.astype(np.int64)
        allowed = np.zeros((L, 4), dtype=bool)
        allowed[lanes, 2 * c] = True
        sel0, u, ok0 = yield from self.base.open_r(states, allowed, ctx.at(i, 0))
        allowed[:] = False
        allowed[lanes, 2 * c + 1] = True
        sel1, v, ok1 = yield from self.base.open_r(states, allowed, ctx.at(i, 1))
        good = ok0 & ok1 & (u == v)
        return u, v, good

    def commit_c(self, bits, rng, ctx=Ctx(), script=None):
        script = script or HonestScript()
        b = np.asarray(bits, dtype=np.uint8).reshape(-1)
        L = b.size
        sess_bits = np.zeros((self.lam, 4, L), dtype=np.uint8)
        c_all = np.zeros((self.lam, L), dtype=np.uint8)
        sessions = []
        for i in range(self.lam):
            it = rng.child(("it", i))
            sb = np.asarray(script.session_bits(i, b, it.child("d")), dtype=np.uint8)
            states, c = yield from self._c_sessions(i, sb, it, ctx)
            yield from self._c_open_pair(i, states, c, ctx)
            sess_bits[i], c_all[i] = sb, c
            sessions.append(states)
        e = np.asarray(script.hints(b, sess_bits, c_all), dtype=np.uint8)
        yield ctx.msg(MsgType.EQ_OPEN, Encoder().u32(_HINTS).bits(e).done())
        return EqCommitter(b, sess_bits, sessions, c_all, e, rng.child("open"))

    def commit_r(self, lanes, rng, ctx=Ctx()):
        return (yield from self._receive(lanes, rng, ctx, None))

    def extract_r(self, lanes, rng, ctx=Ctx(), model=None):
        """Receiver that runs the base extractor on every session, then takes the hint majority.

        ``model`` is the committer's keystream (white-box access).  Returns
        ``(state, bits)`` with ``bits[j] = -1`` when nothing could be extracted;
        an even split gives 0 and sets ``state.decommit['tie']``.
        """
        st = yield from self._receive(lanes, rng, ctx, model)
        L = lanes
        lanes_ix = np.arange(L)
        votes = np.zeros(L, dtype=np.int64)
        counts = np.zeros(L, dtype=np.int64)
        for i in range(self.lam):
            d_other = st.extracted[i, 1 - st.c[i].astype(np.int64), lanes_ix]
            live = d_other >= 0
            votes += np.where(live, (d_other ^ st.e[i]) & 1, 0)
            counts += live
        out = np.where(counts == 0, BOT, (2 * votes > counts).astype(np.int64))
        st.decommit["tie"] = (counts > 0) & (2 * votes == counts)
        return st, out

    def _receive(self, L, rng, ctx, model):
        sessions = []
        c_all = np.zeros((self.lam, L), dtype=np.uint8)
        opened = np.zeros((self.lam, 2, L), dtype=np.uint8)
        aborted = np.zeros(L, dtype=bool)
        first = np.full(L, -1, dtype=np.int64)
        extracted = np.full((self.lam, 2, L), BOT, dtype=np.int64) if model is not None else None
        for i in range(self.lam):
            it = rng.child(("it", i))
            sub_model = model.child(("it", i)) if model is not None else None
            states, c, ext = yield from self._r_sessions(i, L, it, ctx, sub_model)
            u, v, good = yield from self._r_check(i, states, c, ctx)
            fresh = ~good & ~aborted
            first[fresh] = i
            aborted |= ~good
            if self.strict and fresh.any():
                raise ReceiverAbort("challenged pair did not open consistently", i,
                                    int(np.flatnonzero(fresh)[0]))
            sessions.append(states)
            c_all[i] = c
            opened[i, 0], opened[i, 1] = u, v
            if model is not None:
                extracted[i, 0], extracted[i, 1] = ext[0], ext[2]
        msg = yield from tp.recv(MsgType.EQ_OPEN)
        d = Decoder(msg.payload)
        if d.u32() != _HINTS:
            raise ProtocolViolation("expected hints")
        e = d.bits()
        d.done()
        if e.shape != (self.lam, L):
            raise ProtocolViolation(f"hints shape {e.shape}")
        return EqReceiver(sessions, c_all, opened, aborted, first, e, extracted)

    # ---------------------------------------------------------------- open

    def open_c(self, states, sel, ctx=Ctx(), claim=None):
        """Announce a bit per lane, then open one session of each unopened pair.

        The opened session is one whose bit equals claim xor e_i, chosen
        uniformly among those that do (uniformly among both if none does).
        """
        sel = np.asarray(sel, dtype=np.int64)
        L = sel.size
        lanes = np.arange(L)
        live = sel >= 0
        idx = np.maximum(sel, 0)
        if claim is None:
            claim = pick([s.b for s in states], idx)
        claim = np.where(live, np.asarray(claim, dtype=np.uint8), 0).astype(np.uint8)
        yield ctx.msg(MsgType.EQ_OPEN,
                      Encoder().u32(_CLAIM).ints(encode_sel(sel)).bits(claim).done())
        coins = states[0].open_rng
        for i in range(self.lam):
            c = pick([s.c[i] for s in states], idx).astype(np.int64)
            e = pick([s.e[i] for s in states], idx)
            sb = pick([s.sess_bits[i].T for s in states], idx)  # (L, 4)
            pair = 1 - c
            want = claim ^ e
            m0 = sb[lanes, 2 * pair] == want
            m1 = sb[lanes, 2 * pair + 1] == want
            coin = coins.child(("alpha", i)).bits(1)[:, 0].astype(np.int64)
            alpha = np.where(m0 & m1, coin, np.where(m0, 0, np.where(m1, 1, coin)))
            bsel = np.where(live, 4 * idx + 2 * pair + alpha, -1)
            base_states = [s.sessions[i][k] for s in states for k in range(4)]
            yield from self.base.open_c(base_states, bsel, ctx.at(i))

    def open_r(self, states, allowed, ctx=Ctx()):
        msg = yield from tp.recv(MsgType.EQ_OPEN)
        d = Decoder(msg.payload)
        if d.u32() != _CLAIM:
            raise ProtocolViolation("expected a decommitment claim")
        sel = decode_sel(d.ints())
        claim = d.bits()
        d.done()
        L = states[0].aborted.size
        S = len(states)
        if sel.shape != (L,) or claim.shape != (L,):
            raise ProtocolViolation("claim shape")
        lanes = np.arange(L)
        allowed = np.asarray(allowed, dtype=bool).reshape(L, -1)
        in_range = (sel >= 0) & (sel < S)
        idx = np.where(in_range, sel, 0)
        ok = in_range & allowed[lanes, np.minimum(idx, allowed.shape[1] - 1)]
        ok &= ~pick([s.aborted for s in states], idx)
        alphas = np.zeros((self.lam, L), dtype=np.uint8)
        dhat = np.zeros((self.lam, L), dtype=np.uint8)
        for i in range(self.lam):
            c = pick([s.c[i] for s in states], idx).astype(np.int64)
            e = pick([s.e[i] for s in states], idx)
            pair = 1 - c
            allowed_b = np.zeros((L, 4 * S), dtype=bool)
            allowed_b[lanes, 4 * idx + 2 * pair] = True
            allowed_b[lanes, 4 * idx + 2 * pair + 1] = True
            base_states = [s.sessions[i][k] for s in states for k in range(4)]
            bsel, bits, bok = yield from self.base.open_r(base_states, allowed_b, ctx.at(i))
            ok &= bok & (bits == (claim ^ e))
            alphas[i] = np.maximum(bsel, 0) % 2
            dhat[i] = bits
        if S == 1:
            states[0].decommit.update(alpha=alphas, dhat=dhat, claim=claim, ok=ok)
        return sel, claim, ok

    # ---------------------------------------------------------------- equivocate

    def equivocate_c(self, lanes, rng: LaneRng, gen: np.random.Generator, model: LaneRng,
                     ctx=Ctx(), budget: int | None = None):
        """Committer side of an equivocal commitment; open later with ``open_c(..., claim=b)``.

        ``model`` is the keystream the receiver passes to ``commit_r``; with
        it and the challenge rule, each iteration is rehearsed against a
        shadow receiver until every lane's challenge matches the arrangement.
        """
        budget = 32 * self.lam if budget is None else budget
        L = lanes
        sess_bits = np.zeros((self.lam, 4, L), dtype=np.uint8)
        c_all = np.zeros((self.lam, L), dtype=np.uint8)
        attempts = np.zeros((self.lam, L), dtype=np.int64)
        sessions = []
        for i in range(self.lam):
            it = rng.child(("it", i))
            keys = it.keys.copy()
            shadow = model.child(("it", i))
            pending = np.arange(L)
            rounds = 0
            while pending.size:
                if rounds >= budget:
                    raise RetryBudgetExceeded(i, rounds)
                rounds += 1
                attempts[i, pending] += 1
                sub = LaneRng(keys[pending], it.stream)
                c_hat, sb = _arrangement(sub)
                out_c, out_r = run_pair(self._c_sessions(i, sb, sub, ctx),
                                        self._r_sessions(i, pending.size, shadow.subset(pending), ctx))
                if not out_c.ok:
                    raise ProtocolViolation(f"shadow receiver failed: {out_c.abort}")
                miss = pending[out_c.value[1] != c_hat]
                keys[miss] = gen.integers(0, 2**64, size=(miss.size, 2), dtype=np.uint64)
                pending = miss
            final = LaneRng(keys, it.stream)
            c_hat, sb = _arrangement(final)
            states, c = yield from self._c_sessions(i, sb, final, ctx)
            if not np.array_equal(c, c_hat):
                raise ProtocolViolation("receiver deviated from its white-box model")
            yield from self._c_open_pair(i, states, c, ctx)
            sess_bits[i], c_all[i] = sb, c
            sessions.append(states)
        e = gen.integers(0, 2, size=(self.lam, L), dtype=np.uint8)
        yield ctx.msg(MsgType.EQ_OPEN, Encoder().u32(_HINTS).bits(e).done())
        return EqCommitter(None, sess_bits, sessions, c_all, e, rng.child("open"), attempts)

    # ---------------------------------------------------------------- oracles

    def committed(self, state):
        """Committed-value oracle per lane (-1 for no value); needs a transparent base."""
        L = state.c.shape[1]
        lanes = np.arange(L)
        votes = np.zeros(L, dtype=np.int64)
        counts = np.zeros(L, dtype=np.int64)
        for i in range(self.lam):
            bits = np.stack([self.base.committed(s) for s in state.sessions[i]])  # (4, L)
            pair = 1 - state.c[i].astype(np.int64)
            a, b = bits[2 * pair, lanes], bits[2 * pair + 1, lanes]
            live = a == b
            votes += np.where(live, a ^ state.e[i], 0)
            counts += live
        out = np.full(L, BOT, dtype=np.int64)
        decided = (counts > 0) & (2 * votes != counts)
        out[decided] = (2 * votes > counts)[decided]
        return out

    def fingerprint(self, rstate):
        return rstate.e[0].copy() if rstate.e is not None else np.zeros(rstate.c.shape[1], np.uint8)


def _arrangement(rng: LaneRng):
    """Expected challenge and the four session bits: pair c_hat = (z, z), the other (d, 1 - d)."""
    r = rng.child("arr").bits(3)
    c_hat, z, d = r[:, 0], r[:, 1], r[:, 2]
    same = np.stack([z, z])
    split = np.stack([d, 1 - d])
    sb = np.where(c_hat[None, :] == 0,
                  np.concatenate([same, split]), np.concatenate([split, same]))
    return c_hat, sb.astype(np.uint8)


# --------------------------------------------------------------------------
# single-call helpers


@dataclass
class EquivRun:
    committer: EqCommitter
    receiver: EqReceiver
    transcript: tp.Transcript


def eq_commit(engine: EquivEngine, b, rng: np.random.Generator, script=None,
              transcript: tp.Transcript | None = None) -> EquivRun:
    """Commit phase between an honest receiver and a (possibly scripted) committer.

    ``b`` is a bit or an array of bits (one lane each).  Strict engines raise
    ``ReceiverAbort`` on a failed check; lenient ones record it per lane.
    """
    bits = np.atleast_1d(np.asarray(b, dtype=np.uint8))
    L = bits.size
    transcript = transcript if transcript is not None else tp.Transcript()
    crng = LaneRng.from_generator(rng, L, 1)
    rrng = LaneRng.from_generator(rng, L, 2)
    out_c, out_r = run_pair(engine.commit_c(bits, crng, script=script),
                            engine.commit_r(L, rrng), transcript)
    if not out_r.ok:
        raise out_r.abort
    if not out_c.ok:
        raise out_c.abort
    return EquivRun(out_c.value, out_r.value, transcript)


def eq_decommit(engine: EquivEngine, run: EquivRun, claim=None):
    """Opening phase; returns (ok, bits) per lane."""
    L = run.receiver.aborted.size
    out_c, out_r = run_pair(engine.open_c([run.committer], sel_all(L), claim=claim),
                            engine.open_r([run.receiver], np.ones((L, 1), dtype=bool)),
                            run.transcript)
    if not out_r.ok:
        raise out_r.abort
    _, bits, ok = out_r.value
    return ok, bits


def committed_value_oracle(engine: EquivEngine, committer: EqCommitter):
    """Single-lane form: the committed bit or ``None``."""
    v = engine.committed(committer)
    if v.size == 1:
        return None if v[0] == BOT else int(v[0])
    return v


class EquivocalCommit:
    """Result of the classical equivocator: a finished commit phase openable to either bit."""

    def __init__(self, engine, committer, receiver, transcript):
        self.engine = engine
        self.committer = committer
        self.receiver = receiver
        self.transcript = transcript

    @property
    def attempts(self) -> np.ndarray:
        return self.committer.attempts

    def open_to(self, b):
        """Open every lane to ``b`` against a copy of the receiver state; returns (ok, bits)."""
        L = self.receiver.aborted.size
        claim = np.broadcast_to(np.asarray(b, dtype=np.uint8), (L,))
        receiver = EqReceiver(self.receiver.sessions, self.receiver.c, self.receiver.opened,
                              self.receiver.aborted, self.receiver.first_fail, self.receiver.e)
        out_c, out_r = run_pair(self.engine.open_c([self.committer], sel_all(L), claim=claim),
                                self.engine.open_r([receiver], np.ones((L, 1), dtype=bool)))
        if not out_r.ok:
            raise out_r.abort
        self.last_receiver = receiver
        _, bits, ok = out_r.value
        return ok, bits


def classical_equivocator(engine: EquivEngine, lanes: int, rng: np.random.Generator,
                          budget: int | None = None) -> EquivocalCommit:
    """Equivocal commit against an honest receiver using ``engine.challenger``."""
    transcript = tp.Transcript()
    erng = LaneRng.from_generator(rng, lanes, 3)
    rrng = LaneRng.from_generator(rng, lanes, 2)
    gen = np.random.default_rng(rng.integers(0, 2**63))
    out_c, out_r = run_pair(engine.equivocate_c(lanes, erng, gen, rrng, budget=budget),
                            engine.commit_r(lanes, rrng), transcript)
    if not out_c.ok:
        raise out_c.abort
    if not out_r.ok:
        raise out_r.abort
    return EquivocalCommit(engine, out_c.value, out_r.value, transcript)


def extractor_passthrough(engine: EquivEngine, bits, rng: np.random.Generator, script=None):
    """Extract against a (scripted) committer whose keystream is known; returns (bits, receiver state, committer state)."""
    bits = np.atleast_1d(np.asarray(bits, dtype=np.uint8))
    L = bits.size
    crng = LaneRng.from_generator(rng, L, 1)
    rrng = LaneRng.from_generator(rng, L, 2)
    out_c, out_r = run_pair(engine.commit_c(bits, crng, script=script),
                            engine.extract_r(L, rrng, model=crng))
    if not out_r.ok:
        raise out_r.abort
    st, ext = out_r.value
    return ext, st, out_c.value
