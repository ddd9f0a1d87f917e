"""Wire layer: typed messages, framing, channels, transcripts and party drivers.

Frame layout (all integers big-endian)::

    [u32 length of everything below][u8 type][8B session][u32 iter][u32 idx][payload]

``0xFFFFFFFF`` in ``iter``/``idx`` means "not applicable".

Protocol parties are written as generators.  A party yields ``Send(msg)`` to
transmit and ``RECV`` to wait for the next incoming message, and returns its
output.  The same generator runs under the cooperative in-process driver
(:func:`run_pair`) or over a socket (:func:`run_party`).
"""
from __future__ import annotations

import enum
import hashlib
import io
import json
import queue
import socket
import struct
import threading
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import (OversizePayload, PeerAborted, PeerClosed, ProtocolAbort,
                     ProtocolViolation, TruncatedFrame, UnknownType)

NA = 0xFFFFFFFF
MAX_PAYLOAD = 2**24
_HDR = struct.Struct(">IB8sII")
_LEN = struct.Struct(">I")
HEADER_LEN = _HDR.size - 4  # bytes covered by the length field besides the payload


class MsgType(enum.IntEnum):
    QUBIT_BATCH = 1
    NAOR_FIRST = 2
    NAOR_COMMIT = 3
    EQ_CHALLENGE = 4
    EQ_OPEN = 5
    TEST_SET = 6
    BASIS_REVEAL = 7
    PARTITION = 8
    MASKED_LINES = 9
    OPEN_BLOCKS = 10
    ABORT = 11
    IDEAL_F = 12


_KNOWN = frozenset(int(t) for t in MsgType)


@dataclass(frozen=True)
class Message:
    msg_type: int
    payload: bytes = b""
    session: bytes = b"\x00" * 8
    iteration: int | None = None
    index: int | None = None

    def __post_init__(self):
        if len(self.session) != 8:
            raise ValueError("session id must be 8 bytes")


def frame(msg: Message) -> bytes:
    if int(msg.msg_type) not in _KNOWN:
        raise UnknownType(int(msg.msg_type))
    if len(msg.payload) > MAX_PAYLOAD:
        raise OversizePayload(f"payload of {len(msg.payload)} bytes exceeds 2^24")
    it = NA if msg.iteration is None else msg.iteration
    ix = NA if msg.index is None else msg.index
    return _HDR.pack(HEADER_LEN + len(msg.payload), int(msg.msg_type), msg.session, it, ix) + msg.payload


def _parse(buf, offset: int) -> tuple[Message, int]:
    end = len(buf)
    if end - offset < 4:
        raise TruncatedFrame(offset, "missing length field")
    (length,) = _LEN.unpack_from(buf, offset)
    if length < HEADER_LEN:
        raise TruncatedFrame(offset, "length shorter than header")
    if length - HEADER_LEN > MAX_PAYLOAD:
        raise OversizePayload(f"declared payload {length - HEADER_LEN} exceeds 2^24")
    if end - offset - 4 < length:
        raise TruncatedFrame(offset)
    _, t, sess, it, ix = _HDR.unpack_from(buf, offset)
    if t not in _KNOWN:
        raise UnknownType(t, offset)
    start = offset + _HDR.size
    stop = offset + 4 + length
    # zero-copy view when the buffer is immutable; payloads can be tens of MB
    payload = memoryview(buf)[start:stop] if isinstance(buf, bytes) else bytes(buf[start:stop])
    msg = Message(t, payload, bytes(sess),
                  None if it == NA else it, None if ix == NA else ix)
    return msg, stop


def unframe(data: bytes) -> Message:
    """Parse exactly one frame."""
    msg, stop = _parse(data, 0)
    if stop != len(data):
        raise ValueError(f"{len(data) - stop} trailing bytes after frame")
    return msg


def iter_frames(data: bytes):
    """Parse a byte stream into messages; a cut frame raises ``TruncatedFrame``
    before anything past the last complete frame is delivered."""
    off = 0
    while off < len(data):
        msg, off = _parse(data, off)
        yield msg


def unframe_stream(data: bytes) -> list[Message]:
    return list(iter_frames(data))


# --------------------------------------------------------------------------
# payload codec


class Encoder:
    """Builds a payload from typed fields."""

    def __init__(self):
        self._parts: list = []

    def u32(self, v: int) -> "Encoder":
        self._parts.append(struct.pack(">I", int(v)))
        return self

    def bits(self, arr) -> "Encoder":
        a = np.asarray(arr, dtype=np.uint8)
        self._parts.append(struct.pack(">B", a.ndim) + struct.pack(f">{a.ndim}I", *a.shape))
        self._parts.append(np.packbits(a.reshape(-1)).tobytes())
        return self

    def rows(self, packed, nbits: int) -> "Encoder":
        """(L, ceil(nbits/8)) MSB-first packed rows, encoded exactly like ``bits`` of the unpacked array."""
        packed = np.asarray(packed, dtype=np.uint8)
        if nbits % 8:
            return self.bits(np.unpackbits(packed, axis=1)[:, :nbits])
        self._parts.append(struct.pack(">BII", 2, packed.shape[0], nbits))
        self._parts.append(memoryview(np.ascontiguousarray(packed)).cast("B"))  # copied once by join
        return self

    def ints(self, arr) -> "Encoder":
        a = np.asarray(arr)
        if a.size and (a.min() < 0 or a.max() > 0xFFFFFFFF):
            raise ValueError("ints must fit in u32")
        a = a.astype(">u4")
        self._parts.append(struct.pack(">B", a.ndim) + struct.pack(f">{a.ndim}I", *a.shape))
        self._parts.append(a.tobytes())
        return self

    def raw(self, b: bytes) -> "Encoder":
        self._parts.append(struct.pack(">I", len(b)) + bytes(b))
        return self

    def done(self) -> bytes:
        return b"".join(self._parts)


class Decoder:
    def __init__(self, buf: bytes):
        self._buf = buf
        self._off = 0

    def _need(self, n):
        if self._off + n > len(self._buf):
            raise ProtocolViolation("payload too short")

    def u32(self) -> int:
        self._need(4)
        (v,) = struct.unpack_from(">I", self._buf, self._off)
        self._off += 4
        return v

    def _shape(self):
        self._need(1)
        nd = self._buf[self._off]
        self._off += 1
        self._need(4 * nd)
        shape = struct.unpack_from(f">{nd}I", self._buf, self._off)
        self._off += 4 * nd
        return shape

    def bits(self) -> np.ndarray:
        shape = self._shape()
        n = int(np.prod(shape)) if shape else 1
        nb = -(-n // 8)
        self._need(nb)
        raw = np.frombuffer(self._buf, dtype=np.uint8, count=nb, offset=self._off)
        self._off += nb
        return np.unpackbits(raw)[:n].reshape(shape)

    def rows(self) -> tuple[np.ndarray, int]:
        """Inverse of ``Encoder.rows``: (packed rows, bits per row)."""
        start = self._off
        shape = self._shape()
        if len(shape) != 2:
            raise ProtocolViolation("expected a 2-D bit array")
        L, nbits = shape
        if nbits % 8:
            self._off = start
            return np.packbits(self.bits(), axis=1), nbits
        n = L * nbits // 8
        self._need(n)
        raw = np.frombuffer(self._buf, dtype=np.uint8, count=n, offset=self._off)
        self._off += n
        return raw.reshape(L, nbits // 8), nbits  # read-only view

    def ints(self) -> np.ndarray:
        shape = self._shape()
        n = int(np.prod(shape)) if shape else 1
        self._need(4 * n)
        a = np.frombuffer(self._buf, dtype=">u4", count=n, offset=self._off)
        self._off += 4 * n
        return a.astype(np.int64).reshape(shape)

    def raw(self) -> bytes:
        n = self.u32()
        self._need(n)
        b = bytes(self._buf[self._off:self._off + n])
        self._off += n
        return b

    def done(self) -> None:
        if self._off != len(self._buf):
            raise ProtocolViolation("trailing payload bytes")


# --------------------------------------------------------------------------
# transcript


@dataclass
class Transcript:
    """Append-only record of one party's wire events in program order."""

    records: list = field(default_factory=list)

    def add(self, direction: str, msg: Message) -> None:
        self.records.append({
            "n": len(self.records),
            "dir": direction,
            "type": int(msg.msg_type),
            "iter": -1 if msg.iteration is None else msg.iteration,
            "idx": -1 if msg.index is None else msg.index,
            "len": len(msg.payload),
            "sha256": hashlib.sha256(msg.payload).hexdigest(),
        })

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, separators=(",", ":"), sort_keys=False) + "\n"
                       for r in self.records)

    def digest(self) -> str:
        return hashlib.sha256(self.to_jsonl().encode()).hexdigest()

    def __len__(self) -> int:
        return len(self.records)


# --------------------------------------------------------------------------
# channels


class _End:
    honest_only = False

    def send(self, msg: Message) -> None:
        raise NotImplementedError

    def recv(self, timeout: float | None = None) -> Message:
        raise NotImplementedError

    def close(self) -> None:
        pass


class QueueEnd(_End):
    """In-process duplex end; messages cross as framed bytes."""

    def __init__(self, inbox: "queue.Queue", outbox: "queue.Queue"):
        self._in = inbox
        self._out = outbox
        self._lock = threading.Lock()
        self._closed = False

    def send(self, msg: Message) -> None:
        if self._closed:
            raise PeerClosed("end closed")
        with self._lock:
            self._out.put(frame(msg))

    def recv(self, timeout: float | None = None) -> Message:
        try:
            data = self._in.get(timeout=timeout)
        except queue.Empty:
            raise PeerClosed("timed out waiting for peer") from None
        if data is None:
            raise PeerClosed("peer closed")
        return unframe(data)

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            self._out.put(None)


def channel_pair() -> tuple[QueueEnd, QueueEnd]:
    a_to_b: queue.Queue = queue.Queue()
    b_to_a: queue.Queue = queue.Queue()
    return QueueEnd(b_to_a, a_to_b), QueueEnd(a_to_b, b_to_a)


class SocketEnd(_End):
    """TCP-backed end.  Symbolic qubits cross in the clear, so honest runs only."""

    honest_only = True

    def __init__(self, sock: socket.socket):
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._sock = sock
        self._rfile = sock.makefile("rb")
        self._lock = threading.Lock()

    def send(self, msg: Message) -> None:
        data = frame(msg)
        with self._lock:
            try:
                self._sock.sendall(data)
            except OSError as e:
                raise PeerClosed(str(e)) from None

    def _read(self, n: int) -> bytes:
        data = self._rfile.read(n)
        if data is None or len(data) < n:
            raise PeerClosed("connection closed mid-stream")
        return data

    def recv(self, timeout: float | None = None) -> Message:
        self._sock.settimeout(timeout)
        try:
            head = self._rfile.read(4)
        except (OSError, socket.timeout) as e:
            raise PeerClosed(str(e)) from None
        if not head:
            raise PeerClosed("peer closed")
        if len(head) < 4:
            raise PeerClosed("connection closed mid-frame")
        (length,) = _LEN.unpack(head)
        if length - HEADER_LEN > MAX_PAYLOAD:
            raise OversizePayload(f"declared payload {length - HEADER_LEN} exceeds 2^24")
        return unframe(head + self._read(length))

    def close(self) -> None:
        try:
            self._rfile.close()
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()


class Listener:
    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        self._sock = socket.create_server((host, port))
        self.host, self.port = self._sock.getsockname()[:2]

    def accept(self, timeout: float | None = 30.0) -> SocketEnd:
        self._sock.settimeout(timeout)
        conn, _ = self._sock.accept()
        conn.settimeout(None)
        return SocketEnd(conn)

    def close(self) -> None:
        self._sock.close()


def tcp_listen(host: str = "127.0.0.1", port: int = 0) -> Listener:
    return Listener(host, port)


def tcp_connect(host: str, port: int, timeout: float = 30.0) -> SocketEnd:
    sock = socket.create_connection((host, port), timeout=timeout)
    sock.settimeout(None)
    return SocketEnd(sock)


# --------------------------------------------------------------------------
# party drivers


class _Recv:
    __slots__ = ()

    def __repr__(self):
        return "RECV"


RECV = _Recv()


@dataclass(frozen=True)
class Send:
    msg: Message


def abort_message(exc: ProtocolAbort, session: bytes = b"\x00" * 8) -> Message:
    return Message(MsgType.ABORT, f"{exc.reason}:{exc.detail}".encode(), session,
                   exc.iteration, exc.index)


@dataclass
class Outcome:
    """What a party ended with: a return value or an abort."""

    value: object = None
    abort: ProtocolAbort | None = None

    @property
    def ok(self) -> bool:
        return self.abort is None


class _Slot:
    __slots__ = ("gen", "inbox", "waiting", "outcome", "side")

    def __init__(self, gen, side):
        self.gen = gen
        self.inbox: deque = deque()
        self.waiting = False
        self.outcome: Outcome | None = None
        self.side = side


def run_pair(party_a, party_b, transcript: Transcript | None = None,
             session: bytes = b"\x00" * 8) -> tuple[Outcome, Outcome]:
    """Run two party generators to completion in this thread.

    Messages are framed and unframed on the way, exactly as on a socket.
    The transcript, when given, records party A's sends and receives.
    """
    slots = [_Slot(party_a, 0), _Slot(party_b, 1)]

    def deliver(src, data):
        peer = slots[1 - src]
        if peer.outcome is None:
            peer.inbox.append(data)

    def finish(s, outcome):
        s.outcome = outcome
        if outcome.abort is not None and not isinstance(outcome.abort, PeerAborted):
            data = frame(abort_message(outcome.abort, session))
            if s.side == 0 and transcript is not None:
                transcript.add("A>B", unframe(data))
            deliver(s.side, data)

    def incoming(s):
        msg = unframe(s.inbox.popleft())
        if s.side == 0 and transcript is not None:
            transcript.add("B>A", msg)
        if msg.msg_type == MsgType.ABORT:
            return None, PeerAborted(bytes(msg.payload).decode(errors="replace"), msg.iteration, msg.index)
        return msg, None

    def advance(s, value=None, exc=None):
        # run the party until it blocks on an empty inbox or ends
        s.waiting = False
        while True:
            try:
                out = s.gen.throw(exc) if exc is not None else s.gen.send(value)
            except StopIteration as stop:
                finish(s, Outcome(value=stop.value))
                return
            except ProtocolAbort as e:
                finish(s, Outcome(abort=e))
                return
            value = exc = None
            if out is RECV:
                if not s.inbox:
                    s.waiting = True
                    return
                value, exc = incoming(s)
            else:
                data = frame(out.msg)
                if s.side == 0 and transcript is not None:
                    transcript.add("A>B", out.msg)
                deliver(s.side, data)

    for s in slots:
        advance(s)
    while not all(s.outcome is not None for s in slots):
        progressed = False
        for s in slots:
            if s.outcome is None and s.waiting and s.inbox:
                advance(s, *incoming(s))
                progressed = True
        if not progressed:
            # deadlock or a finished peer: the waiting party sees a closed channel
            s = next(s for s in slots if s.outcome is None)
            advance(s, exc=PeerClosed("peer finished without sending"))
    return slots[0].outcome, slots[1].outcome


def run_party(party, end: _End, transcript: Transcript | None = None, side: str = "A",
              session: bytes = b"\x00" * 8, timeout: float | None = 60.0) -> Outcome:
    """Drive one party generator over a channel end (socket or queue)."""
    out_dir = "A>B" if side == "A" else "B>A"
    in_dir = "B>A" if side == "A" else "A>B"
    value = None
    exc = None
    while True:
        try:
            out = party.throw(exc) if exc is not None else party.send(value)
        except StopIteration as stop:
            return Outcome(value=stop.value)
        except ProtocolAbort as e:
            if not isinstance(e, PeerAborted):
                msg = abort_message(e, session)
                if transcript is not None:
                    transcript.add(out_dir, msg)
                try:
                    end.send(msg)
                except PeerClosed:
                    pass
            return Outcome(abort=e)
        value = None
        exc = None
        if out is RECV:
            try:
                msg = end.recv(timeout=timeout)
            except PeerClosed as e:
                exc = e
                continue
            if transcript is not None:
                transcript.add(in_dir, msg)
            if msg.msg_type == MsgType.ABORT:
                exc = PeerAborted(bytes(msg.payload).decode(errors="replace"), msg.iteration, msg.index)
            else:
                value = msg
        else:
            if transcript is not None:
                transcript.add(out_dir, out.msg)
            end.send(out.msg)


def run_threaded(party_a, party_b, end_a: _End, end_b: _End,
                 transcript: Transcript | None = None,
                 session: bytes = b"\x00" * 8) -> tuple[Outcome, Outcome]:
    """Party B on a worker thread, party A here; the transcript is A's view."""
    box: dict = {}

    def work():
        try:
            box["b"] = run_party(party_b, end_b, None, "B", session)
        except BaseException as e:  # surfaced to the caller below
            box["err"] = e

    t = threading.Thread(target=work, daemon=True)
    t.start()
    out_a = run_party(party_a, end_a, transcript, "A", session)
    t.join(timeout=120)
    if "err" in box:
        raise box["err"]
    return out_a, box["b"]


# --------------------------------------------------------------------------
# helpers used inside party generators


def expect(msg: Message, *types) -> Message:
    if msg.msg_type not in types:
        raise ProtocolViolation(f"expected type {[int(t) for t in types]}, got {int(msg.msg_type)}")
    return msg


def recv(*types):
    """``msg = yield from recv(MsgType.X)`` inside a party generator."""
    msg = yield RECV
    return expect(msg, *types)


def send(msg_type, payload: bytes = b"", iteration=None, index=None, session=b"\x00" * 8):
    """``yield from send(...)`` inside a party generator."""
    yield Send(Message(msg_type, payload, session, iteration, index))


def transcript_from_jsonl(text: str) -> Transcript:
    t = Transcript()
    for line in io.StringIO(text):
        if line.strip():
            t.records.append(json.loads(line))
    return t
