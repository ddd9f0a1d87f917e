"""Oblivious transfer from BB84 qubits and position-wise commitments.

Sender: BB84 qubits (x, theta) of 16 lam positions; the receiver measures in
random bases and commits to bases and outcomes; a test set T of 8 lam
positions is opened and checked; theta is revealed on the survivors; the
receiver partitions the survivors into (I_0, I_1) with its matching bases in
I_b; the sender masks m_c with a hash of x restricted to I_c.

Simulators: ``sim_sender`` plays the receiver against a possibly malicious
sender and recovers both messages; ``sim_receiver`` plays the sender against
a possibly malicious receiver and extracts its choice bit.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import transport as tp
from .engine import CommitEngine, Ctx
from .equiv import EquivEngine
from .errors import ProtocolViolation, ReceiverAbort, SenderAbort
from .extcom import (BiasedMeasure, ExtcomEngine, ExtParams, HonestMeasure, NonMeasuring,
                     check_extract, check_receive, check_send, recv_bases, take)
from .qsim import QubitArray
from .hashing import HashParams, hash_many
from .naor import NaorEngine
from .prg import stream_prg
from .rng import LaneRng
from .transport import Decoder, Encoder, MsgType, run_pair


@dataclass(frozen=True)
class QotParams:
    lam: int

    @property
    def n_total(self) -> int:
        return 16 * self.lam

    @property
    def n_test(self) -> int:
        return 8 * self.lam

    @property
    def n_surv(self) -> int:
        return self.n_total - self.n_test

    @property
    def msg_len(self) -> int:
        return self.lam

    @property
    def hash(self) -> HashParams:
        return HashParams(self.n_surv, self.msg_len)

    @property
    def threshold(self) -> float:
        return 1.5 * self.lam


STACKS = ("cheap", "ee")


def qot_engine(params: QotParams, stack: str = "cheap", strict: bool = True,
               seed_len: int = 128) -> CommitEngine:
    """Position-wise commitment engine.

    ``ee`` is equiv(extcom(equiv(naor))); ``cheap`` is equiv(naor), which is
    not extractable against quantum committers and is flagged as such in reports.
    """
    lam = params.lam
    naor = NaorEngine(stream_prg(seed_len))
    if stack == "cheap":
        return EquivEngine(naor, lam, strict=strict)
    if stack == "ee":
        ext = ExtcomEngine(ExtParams.preset(lam), EquivEngine(naor, lam), strict=True)
        return EquivEngine(ext, lam, strict=strict)
    raise ValueError(f"unknown stack {stack!r}")


# --------------------------------------------------------------------------
# helpers


def gather_side(xs: np.ndarray, part: np.ndarray, side: int) -> np.ndarray:
    """Bits of ``xs`` at survivors assigned to ``side``, ascending, zero-padded to full width."""
    sel = part == side
    order = np.argsort(~sel, axis=1, kind="stable")
    out = take(xs, order)
    count = sel.sum(axis=1)
    out[np.arange(out.shape[1])[None, :] >= count[:, None]] = 0
    return out


def partition_for(theta_s: np.ndarray, theta_hat_s: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Honest partition mask: 1 marks I_1.  Matching bases go to I_b."""
    match = theta_s == theta_hat_s
    return np.where(match, b[:, None], 1 - b[:, None]).astype(np.uint8)


def _mask_lines(params, seeds, xs, part, msgs):
    lines = np.empty_like(msgs)
    for c in (0, 1):
        lines[:, c] = hash_many(params.hash, seeds[:, c], gather_side(xs, part, c)) ^ msgs[:, c]
    return lines


def _recv_partition(L, n_surv):
    msg = yield from tp.recv(MsgType.PARTITION)
    d = Decoder(msg.payload)
    part = d.bits()
    d.done()
    if part.shape != (L, n_surv):
        raise ProtocolViolation("partition shape")
    return part


def _recv_lines(params, L):
    msg = yield from tp.recv(MsgType.MASKED_LINES)
    d = Decoder(msg.payload)
    seeds, lines = d.bits(), d.bits()
    d.done()
    if seeds.shape != (L, 2, params.hash.seed_len) or lines.shape != (L, 2, params.msg_len):
        raise ProtocolViolation("masked line shape")
    return seeds, lines


# --------------------------------------------------------------------------
# parties


@dataclass
class SenderState:
    x: np.ndarray
    theta: np.ndarray
    T: np.ndarray
    surv: np.ndarray
    aborted: np.ndarray
    checked: np.ndarray
    part: np.ndarray | None = None
    seeds: np.ndarray | None = None
    lines: np.ndarray | None = None
    extracted: dict = field(default_factory=dict)


@dataclass
class ReceiverState:
    theta_hat: np.ndarray
    x_hat: np.ndarray
    T: np.ndarray
    surv: np.ndarray
    b: np.ndarray
    theta_s: np.ndarray | None = None
    part: np.ndarray | None = None
    output: np.ndarray | None = None


def _abort_or_continue(strict, bad, first, L):
    if bad.any() and strict:
        lane = int(np.flatnonzero(bad)[0])
        raise SenderAbort("measurement check failed", lane, int(first[lane]))


def sender(params: QotParams, engine: CommitEngine, m0, m1, rng: LaneRng, ctx=Ctx(),
           strict: bool = True, extract_model: LaneRng | None = None, choose=None):
    """Sender party.  Lenient mode (``strict=False``) marks failing lanes and keeps going.

    With ``extract_model`` (the receiver's keystream) the position-wise
    commitments are extracted rather than just received, and ``choose`` is
    called after the partition to pick the messages to mask (simulator use).
    """
    m = np.stack([np.atleast_2d(m0), np.atleast_2d(m1)], axis=1).astype(np.uint8)
    L, n = m.shape[0], params.n_total
    try:
        chk = yield from check_send(engine, L, n, params.n_test, rng, ctx, extract_model)
    except ReceiverAbort as e:
        raise SenderAbort(f"commitment check failed: {e.detail}", e.iteration, e.index)
    _abort_or_continue(strict, chk.bad, chk.first_bad, L)
    st = SenderState(chk.x, chk.theta, chk.T, chk.surv, chk.bad.copy(), chk.checked)
    st.extracted = chk.extracted or {}
    theta_s = take(chk.theta, chk.surv)
    yield ctx.msg(MsgType.BASIS_REVEAL, Encoder().bits(theta_s).done())
    st.part = yield from _recv_partition(L, params.n_surv)
    if choose is not None:
        m = choose(st, m)
    st.seeds = rng.child("seeds").bits(2 * params.hash.seed_len).reshape(L, 2, -1)
    st.lines = _mask_lines(params, st.seeds, take(chk.x, chk.surv), st.part, m)
    yield ctx.msg(MsgType.MASKED_LINES, Encoder().bits(st.seeds).bits(st.lines).done())
    return st


# --------------------------------------------------------------------------
# receiver strategies


class HonestReceiver:
    name = "honest"
    measure = HonestMeasure()

    def partition(self, theta_s, theta_hat_s, b, rng):
        return partition_for(theta_s, theta_hat_s, b)


class NonMeasuringReceiver(HonestReceiver):
    name = "non_measuring_receiver"
    measure = NonMeasuring()


class BothMessagesReceiver(HonestReceiver):
    """Measures everything in random bases, then partitions by coin flips."""

    name = "both_messages_receiver"

    def partition(self, theta_s, theta_hat_s, b, rng):
        return rng.child("split").bits(theta_s.shape[1])


class BiasedBasisReceiver(HonestReceiver):
    def __init__(self, p: float):
        self.p = float(p)
        self.measure = BiasedMeasure(p)
        self.name = f"biased_basis_receiver({self.p:g})"


def receiver(params: QotParams, engine: CommitEngine, b, rng: LaneRng, ctx=Ctx(), strategy=None):
    strategy = strategy or HonestReceiver()
    b = np.atleast_1d(np.asarray(b, dtype=np.uint8))
    L, n = b.size, params.n_total
    chk = yield from check_receive(engine, L, n, params.n_test, rng, ctx, strategy.measure)
    return (yield from _receiver_tail(params, chk, b, rng, strategy))


def _receiver_tail(params, chk, b, rng, strategy, ctx=Ctx()):
    L = b.size
    st = ReceiverState(chk.theta_hat, chk.x_hat, chk.T, chk.surv, b)
    st.theta_s = yield from recv_bases(L, params.n_surv)
    st.part = np.asarray(strategy.partition(st.theta_s, take(chk.theta_hat, chk.surv), b, rng),
                         dtype=np.uint8)
    yield ctx.msg(MsgType.PARTITION, Encoder().bits(st.part).done())
    seeds, lines = yield from _recv_lines(params, L)
    st.output = _recover(params, seeds, lines, take(chk.x_hat, chk.surv), st.part, b)
    return st


def _recover(params, seeds, lines, xs_hat, part, c):
    out = np.empty((part.shape[0], params.msg_len), dtype=np.uint8)
    for side in (0, 1):
        rows = np.flatnonzero(c == side)
        if rows.size:
            h = hash_many(params.hash, seeds[rows, side], gather_side(xs_hat[rows], part[rows], side))
            out[rows] = h ^ lines[rows, side]
    return out


# --------------------------------------------------------------------------
# sender strategies


class HonestSender:
    name = "honest"

    def run(self, params, engine, m0, m1, rng, strict=True):
        return sender(params, engine, m0, m1, rng, strict=strict)


class AbortingSender:
    """Stops right after the receiver's commitments arrive."""

    name = "aborting_sender"

    def run(self, params, engine, m0, m1, rng, strict=True):
        L, n = np.atleast_2d(m0).shape[0], params.n_total
        x = rng.child("x").bits(n)
        theta = rng.child("theta").bits(n)
        yield Ctx().msg(MsgType.QUBIT_BATCH,
                        Encoder().u32(L).u32(n).raw(QubitArray(x, theta).to_bytes()).done())
        yield from engine.commit_r(L * n, rng.expand(n, "r-theta"), Ctx())
        yield from engine.commit_r(L * n, rng.expand(n, "r-x"), Ctx())
        raise SenderAbort("scripted abort")


def adversary_library() -> dict:
    return {
        "honest": HonestReceiver,
        "non_measuring_receiver": NonMeasuringReceiver,
        "both_messages_receiver": BothMessagesReceiver,
        "biased_basis_receiver": BiasedBasisReceiver,
        "honest_sender": HonestSender,
        "aborting_sender": AbortingSender,
    }


# --------------------------------------------------------------------------
# ideal functionality


class IdealOT:
    """One-shot ideal OT over a batch of lanes."""

    def __init__(self, session: bytes = b"\x00" * 8):
        self.session = session
        self.m = None
        self.b = None
        self.sender_abort = None
        self.receiver_abort = None
        self.delivered = False

    def sender_input(self, m0, m1):
        if self.m is not None:
            raise RuntimeError("sender input already given")
        self.m = np.stack([np.atleast_2d(m0), np.atleast_2d(m1)], axis=1).astype(np.uint8)

    def sender_aborts(self, lanes=None):
        self.sender_abort = True if lanes is None else np.asarray(lanes, dtype=bool)

    def receiver_input(self, b):
        if self.b is not None:
            raise RuntimeError("receiver input already given")
        self.b = np.atleast_1d(np.asarray(b, dtype=np.int64))

    def receiver_aborts(self):
        self.receiver_abort = True

    def deliver(self):
        """(receiver outputs, sender outputs); aborted lanes give None on both sides."""
        if self.delivered:
            raise RuntimeError("ideal OT already delivered")
        self.delivered = True
        L = self.b.size if self.b is not None else (self.m.shape[0] if self.m is not None else 1)
        dead = np.zeros(L, dtype=bool)
        if self.receiver_abort or self.m is None or self.b is None:
            dead[:] = True
        elif self.sender_abort is not None:
            dead |= np.broadcast_to(self.sender_abort, (L,))
        out_r, out_s = [], []
        for j in range(L):
            if dead[j]:
                out_r.append(None)
                out_s.append(None)
            else:
                out_r.append(self.m[j, self.b[j]].copy())
                out_s.append("end")
        return out_r, out_s


# --------------------------------------------------------------------------
# runs


@dataclass
class QotRun:
    sender: SenderState | None
    receiver: ReceiverState | None
    sender_abort: object
    receiver_abort: object
    transcript: tp.Transcript | None

    @property
    def ok(self) -> bool:
        return self.sender_abort is None and self.receiver_abort is None


def _lane_rngs(seed: int, lanes: int):
    return LaneRng.from_seed(seed, lanes, "sender"), LaneRng.from_seed(seed, lanes, "receiver")


def qot_run(params: QotParams, m0, m1, b, seed: int = 0, stack: str = "cheap",
            transport: str = "inproc", strategy=None, strict: bool = True,
            record: bool = True) -> QotRun:
    """Run the protocol; ``m0``/``m1`` are (lanes, lam) bits and ``b`` has one bit per lane."""
    b = np.atleast_1d(np.asarray(b, dtype=np.uint8))
    L = b.size
    srng, rrng = _lane_rngs(seed, L)
    engine = qot_engine(params, stack, strict=strict)
    transcript = tp.Transcript() if record else None
    s_gen = sender(params, engine, m0, m1, srng, strict=strict)
    r_gen = receiver(params, engine, b, rrng, strategy=strategy)
    if transport == "inproc":
        out_s, out_r = run_pair(s_gen, r_gen, transcript)
    elif transport == "tcp":
        if tp.SocketEnd.honest_only and type(strategy or HonestReceiver()) is not HonestReceiver:
            raise ValueError("the socket transport carries honest-honest runs only")
        lst = tp.tcp_listen()
        end_a = tp.tcp_connect(lst.host, lst.port)
        end_b = lst.accept()
        try:
            out_s, out_r = tp.run_threaded(s_gen, r_gen, end_a, end_b, transcript)
        finally:
            end_a.close()
            end_b.close()
            lst.close()
    else:
        raise ValueError(f"unknown transport {transport!r}")
    return QotRun(out_s.value, out_r.value, out_s.abort, out_r.abort, transcript)


# --------------------------------------------------------------------------
# simulators


@dataclass
class SimSenderResult:
    extracted: np.ndarray | None   # (L, 2, lam) both messages
    receiver_output: list
    sender_state: object
    aborted: bool
    part: np.ndarray | None = None


def sim_sender(params: QotParams, strategy, ideal: IdealOT, b, m0, m1, seed: int = 0,
               stack: str = "cheap") -> SimSenderResult:
    """Simulator against a (possibly malicious) sender; recovers both messages.

    The sender's keystream is white-box input: it is what the equivocator
    rehearses against.  ``b`` is the honest receiver's ideal input.
    """
    b = np.atleast_1d(np.asarray(b, dtype=np.uint8))
    L, n = b.size, params.n_total
    srng, rrng = _lane_rngs(seed, L)
    engine = qot_engine(params, stack)
    ideal.receiver_input(b)

    def simulator():
        chk = yield from check_extract(engine, L, n, params.n_test, rrng, srng, Ctx())
        theta_s = yield from recv_bases(L, params.n_surv)
        part = rrng.child("coins-d").bits(params.n_surv)
        yield Ctx().msg(MsgType.PARTITION, Encoder().bits(part).done())
        seeds, lines = yield from _recv_lines(params, L)
        smask = np.zeros((L, n), dtype=bool)
        np.put_along_axis(smask, chk.surv, True, axis=1)
        bases = np.zeros((L, n), dtype=np.uint8)
        np.put_along_axis(bases, chk.surv, theta_s, axis=1)
        xs = chk.qubits.measure_at(smask, bases, rrng.child("coins-s").bits(n))
        xs_s = take(xs, chk.surv)
        both = np.stack([_recover(params, seeds, lines, xs_s, part, np.full(L, c))
                         for c in (0, 1)], axis=1)
        return both, part

    out_s, out_r = run_pair(strategy.run(params, engine, m0, m1, srng), simulator())
    if not out_r.ok:
        ideal.sender_aborts()
        rec, _ = ideal.deliver()
        return SimSenderResult(None, rec, out_s.value, True)
    both, part = out_r.value
    ideal.sender_input(both[:, 0], both[:, 1])
    rec, _ = ideal.deliver()
    return SimSenderResult(both, rec, out_s.value, False, part)


@dataclass
class SimReceiverResult:
    extracted_b: np.ndarray | None
    s_size: np.ndarray | None
    receiver_state: object
    sender_output: list
    aborted: bool
    sender_state: object = None


def sim_receiver(params: QotParams, strategy, ideal: IdealOT, b, m0, m1, seed: int = 0,
                 stack: str = "cheap") -> SimReceiverResult:
    """Simulator against a (possibly malicious) receiver; extracts its choice bit.

    ``b`` is the receiver strategy's choice input; ``(m0, m1)`` is the honest
    sender's ideal input.  Commitments are extracted using the receiver's
    keystream (white-box).
    """
    b = np.atleast_1d(np.asarray(b, dtype=np.uint8))
    L = b.size
    srng, rrng = _lane_rngs(seed, L)
    engine = qot_engine(params, stack)
    ideal.sender_input(m0, m1)
    found = {}

    def choose(st, m):
        th_hat = take(st.extracted["theta_hat"], st.surv)
        theta_s = take(st.theta, st.surv)
        in0 = st.part == 0
        s_size = (in0 & (theta_s != th_hat)).sum(axis=1)
        bstar = (s_size >= params.threshold).astype(np.int64)
        ideal.receiver_input(bstar)
        rec, send_out = ideal.deliver()
        found.update(b=bstar, s=s_size, sender_output=send_out)
        fake = np.zeros_like(m)
        lanes = np.arange(L)
        fake[lanes, bstar] = np.stack(rec)
        return fake

    zeros = np.zeros((L, params.msg_len), dtype=np.uint8)
    out_s, out_r = run_pair(sender(params, engine, zeros, zeros, srng, extract_model=rrng,
                                   choose=choose),
                            receiver(params, engine, b, rrng, strategy=strategy))
    if not out_s.ok or not found:
        if not ideal.delivered:
            ideal.receiver_aborts()
            ideal.deliver()
        return SimReceiverResult(None, None, out_r.value, [None] * L, True)
    return SimReceiverResult(found["b"], found["s"], out_r.value, found["sender_output"], False,
                             out_s.value)
