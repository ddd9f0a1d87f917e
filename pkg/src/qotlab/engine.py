"""Batched commitment-engine interface and in-process peer driving.

Every engine runs many independent commitment sessions ("lanes") in
lock-step; a lane's messages depend only on that lane's keystream and on
the lane's own incoming data.  Party code is written as generators that
yield ``Send(msg)`` or ``RECV`` (see ``transport``).

Engine methods, all generators used with ``yield from``:

``commit_c(bits, rng, ctx)``    committer side of the commit phase, returns a state
``commit_r(lanes, rng, ctx)``   receiver side, returns a state
``open_c(states, sel, ctx)``    open lane ``j`` of ``states[sel[j]]`` (``sel[j] < 0``: skip)
``open_r(states, allowed, ctx)`` returns ``(sel, bits, ok)`` per lane

``open_c``/``open_r`` take a list of states so that a caller holding several
sessions per lane (the equivocal compiler) opens one of them per lane in a
single message.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import OpaqueEngine, PeerAborted, PeerClosed, ProtocolAbort, ProtocolViolation
from .transport import RECV, Message, MsgType, Send, abort_message


@dataclass(frozen=True)
class Ctx:
    """Header fields stamped on every message of a (sub-)protocol."""

    session: bytes = b"\x00" * 8
    iteration: int | None = None
    index: int | None = None

    def at(self, iteration=None, index=None) -> "Ctx":
        return Ctx(self.session,
                   self.iteration if iteration is None else iteration,
                   self.index if index is None else index)

    def msg(self, msg_type, payload: bytes) -> Send:
        return Send(Message(msg_type, payload, self.session, self.iteration, self.index))


@dataclass
class Verdict:
    """Outcome of a decommitment: accepted bit or a rejection reason."""

    accepted: bool
    bit: int | None = None
    reason: str = ""

    def __bool__(self):
        return self.accepted


@dataclass
class LaneVerdicts:
    """Per-lane decommitment outcome of a batched engine."""

    ok: np.ndarray
    bits: np.ndarray
    reasons: list = field(default_factory=list)

    def verdict(self, lane: int = 0) -> Verdict:
        if self.ok[lane]:
            return Verdict(True, int(self.bits[lane]))
        return Verdict(False, None, self.reasons[lane] if self.reasons else "rejected")


class CommitEngine:
    """Base class; see the module docstring for the generator protocol."""

    name = "abstract"
    n_states_per_open = 1

    def commit_c(self, bits, rng, ctx: Ctx):
        raise NotImplementedError

    def commit_r(self, lanes: int, rng, ctx: Ctx):
        raise NotImplementedError

    def open_c(self, states, sel, ctx: Ctx):
        raise NotImplementedError

    def open_r(self, states, allowed, ctx: Ctx):
        raise NotImplementedError

    def committed(self, state) -> np.ndarray:
        """Committed bits per lane, only for engines built in transparent mode."""
        raise OpaqueEngine(f"{self.name} engine is not transparent")

    def fingerprint(self, rstate) -> np.ndarray:
        """One bit per lane of the receiver's commit view (used by transcript-driven challengers)."""
        raise NotImplementedError

    def describe(self) -> str:
        return self.name


def sel_all(lanes: int, which: int = 0) -> np.ndarray:
    return np.full(lanes, which, dtype=np.int64)


def pick(arrays, idx) -> np.ndarray:
    """Row j of ``arrays[idx[j]]`` for every lane j (lanes on the first axis)."""
    if len(arrays) == 1:
        return arrays[0]
    return kernels.pick_rows(arrays, idx)


def encode_sel(sel) -> np.ndarray:
    return np.asarray(sel, dtype=np.int64) + 1


def decode_sel(raw) -> np.ndarray:
    return np.asarray(raw, dtype=np.int64) - 1


# --------------------------------------------------------------------------
# driving a generator party from imperative code


class Peer:
    """A party generator advanced on demand by imperative simulator code."""

    def __init__(self, gen, session: bytes = b"\x00" * 8):
        self.gen = gen
        self.session = session
        self.outbox: deque = deque()
        self.waiting = False
        self.abort: ProtocolAbort | None = None
        self.done = False
        self.value = None
        self.sent: list = []
        self.received: list = []
        self._advance(None)

    def _advance(self, value, exc=None):
        self.waiting = False
        while True:
            try:
                out = self.gen.throw(exc) if exc is not None else self.gen.send(value)
            except StopIteration as stop:
                self.done, self.value = True, stop.value
                return
            except ProtocolAbort as e:
                self.done, self.abort = True, e
                return
            value = exc = None
            if out is RECV:
                self.waiting = True
                return
            self.outbox.append(out.msg)

    @property
    def aborted(self) -> bool:
        return self.abort is not None and not isinstance(self.abort, PeerAborted)

    def deliver(self, msg: Message) -> None:
        self.received.append(msg)
        if self.done:
            return
        if not self.waiting:
            raise ProtocolViolation("message delivered to a peer that is not receiving")
        if msg.msg_type == MsgType.ABORT:
            self._advance(None, PeerAborted(bytes(msg.payload).decode(errors="replace"),
                                            msg.iteration, msg.index))
        else:
            self._advance(msg)

    def take(self) -> Message:
        if self.outbox:
            msg = self.outbox.popleft()
            self.sent.append(msg)
            return msg
        if self.aborted:
            raise PeerAborted(f"{self.abort.reason}:{self.abort.detail}",
                              self.abort.iteration, self.abort.index)
        raise PeerClosed("peer has nothing to send")

    def finish(self, exc: ProtocolAbort | None = None):
        """Tell the peer we are gone (abort message or closed channel)."""
        if self.done:
            return
        if exc is not None:
            self.deliver(abort_message(exc, self.session))
        else:
            self._advance(None, PeerClosed("simulator finished"))


def drive(local, peer: Peer):
    """Run the local generator against ``peer`` until it returns; its value is returned.

    A ``ProtocolAbort`` raised by the local side is forwarded to the peer
    as an abort message and re-raised.
    """
    value = exc = None
    while True:
        try:
            out = local.throw(exc) if exc is not None else local.send(value)
        except StopIteration as stop:
            return stop.value
        except ProtocolAbort as e:
            if not isinstance(e, PeerAborted):
                peer.finish(e)
            raise
        value = exc = None
        if out is RECV:
            try:
                value = peer.take()
            except (PeerAborted, PeerClosed) as e:
                exc = e
        else:
            peer.deliver(out.msg)


def run_local(local):
    """Run a generator that must not communicate; returns its value."""
    try:
        out = local.send(None)
    except StopIteration as stop:
        return stop.value
    raise ProtocolViolation(f"unexpected communication {out!r}")
