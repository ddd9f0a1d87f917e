"""BB84 extractable commitment with a measurement check and hashed masking.

Committer: send BB84 qubits (x, theta); the receiver measures in random
bases and commits to its bases and outcomes position-wise; the committer
asks for a random test set T, checks the openings on matching bases, then
reveals theta on the survivors and sends, per block, a hash seed and
v = b xor h(seed, block of x).  Decommit reveals b and the survivor bits.

The extractor keeps the qubits unmeasured, equivocates its position-wise
commitments, measures T in fresh random bases when asked, measures the
survivors in the revealed bases and takes the majority of h(seed, block)
xor v over blocks.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import transport as tp
from .engine import CommitEngine, Ctx, decode_sel, encode_sel, sel_all
from .errors import CommitterAbort, DomainTooLarge, ExtractAbort, PeerAborted, PeerClosed, \
    ProtocolViolation, ReceiverAbort
from .hashing import HashParams, hash_many, lhl_bound
from .naor import NaorEngine
from .qsim import QubitArray
from .rng import LaneRng
from .transport import Decoder, Encoder, MsgType, run_pair


@dataclass(frozen=True)
class ExtParams:
    lam: int
    n_total: int
    n_test: int
    n_blocks: int
    block_len: int

    def __post_init__(self):
        if self.n_total != 2 * self.n_test:
            raise ValueError("n_total must be 2 * n_test")
        if self.n_blocks * self.block_len != self.n_total - self.n_test:
            raise ValueError("blocks must tile the survivors exactly")
        if self.lam < 1:
            raise ValueError("lam must be positive")

    @classmethod
    def preset(cls, lam: int) -> "ExtParams":
        """2 lam^3 qubits, half tested, lam blocks of lam^2 bits."""
        return cls(lam, 2 * lam**3, lam**3, lam, lam**2)

    @classmethod
    def micro(cls, n_total: int = 8, n_blocks: int = 1) -> "ExtParams":
        half = n_total // 2
        return cls(1, n_total, half, n_blocks, half // n_blocks)

    @property
    def n_surv(self) -> int:
        return self.n_total - self.n_test

    @property
    def hash(self) -> HashParams:
        return HashParams(self.block_len, 1)


def default_inner(lam: int, seed_len: int = 128) -> CommitEngine:
    from .equiv import EquivEngine
    from .prg import stream_prg

    return EquivEngine(NaorEngine(stream_prg(seed_len)), lam)


# --------------------------------------------------------------------------
# receiver measurement strategies


class HonestMeasure:
    name = "honest"

    def __call__(self, qubits: QubitArray, rng: LaneRng):
        shape = qubits.shape
        bases = rng.child("theta").bits(shape[1])
        return bases, qubits.measure(bases, rng.child("coins").bits(shape[1]))


class NonMeasuring:
    """Commits to random guesses and never touches the qubits."""

    name = "non-measuring"

    def __call__(self, qubits, rng):
        n = qubits.shape[1]
        return rng.child("theta").bits(n), rng.child("guess").bits(n)


class BiasedMeasure:
    """Measures each position with probability p, guesses the rest."""

    def __init__(self, p: float):
        self.p = float(p)
        self.name = f"biased-{self.p:g}"

    def __call__(self, qubits, rng):
        n = qubits.shape[1]
        bases = rng.child("theta").bits(n)
        outcome = qubits.measure(bases, rng.child("coins").bits(n))
        if self.p >= 1.0:
            return bases, outcome
        skip = rng.child("skip").uniform(n) >= self.p
        return bases, np.where(skip, rng.child("guess").bits(n), outcome).astype(np.uint8)


class Clairvoyant:
    """Test-only: reads the encoding bases off the symbolic qubits and measures in them."""

    name = "clairvoyant"

    def __call__(self, qubits, rng):
        bases = qubits._bases.copy()
        return bases, qubits.measure(bases, rng.child("coins").bits(qubits.shape[1]))


MEASURE_STRATEGIES = {"honest": HonestMeasure, "non-measuring": NonMeasuring,
                      "clairvoyant": Clairvoyant}


# --------------------------------------------------------------------------
# measurement-check subprotocol (shared with the OT protocol)


@dataclass
class CheckSender:
    x: np.ndarray       # (L, n)
    theta: np.ndarray   # (L, n)
    T: np.ndarray       # (L, n_test) sorted
    surv: np.ndarray    # (L, n_surv) sorted
    bad: np.ndarray     # (L,) lanes that failed the check
    first_bad: np.ndarray  # (L,) first failing position, -1 if none
    checked: np.ndarray    # (L,) number of tested positions with matching bases
    extracted: dict | None = None  # theta_hat / x_hat recovered by extraction


@dataclass
class CheckReceiver:
    qubits: QubitArray
    theta_hat: np.ndarray
    x_hat: np.ndarray
    T: np.ndarray | None = None
    surv: np.ndarray | None = None
    com_theta: object = None
    com_x: object = None


def _mask(idx: np.ndarray, n: int) -> np.ndarray:
    m = np.zeros((idx.shape[0], n), dtype=bool)
    np.put_along_axis(m, idx, True, axis=1)
    return m


def _survivors(T: np.ndarray, n: int) -> np.ndarray:
    m = ~_mask(T, n)
    return np.nonzero(m)[1].reshape(T.shape[0], n - T.shape[1])


def check_send(engine: CommitEngine, lanes: int, n: int, n_test: int, rng: LaneRng, ctx: Ctx,
               extract_model: LaneRng | None = None):
    """Sender side: BB84 qubits out, commitments in, test set T out, openings checked.

    With ``extract_model`` (the receiver's keystream) the commitments are
    received through the engine's extractor and the committed bases and
    outcomes are kept in ``extracted``.
    """
    x = rng.child("x").bits(n)
    theta = rng.child("theta").bits(n)
    yield ctx.msg(MsgType.QUBIT_BATCH,
                  Encoder().u32(lanes).u32(n).raw(QubitArray(x, theta).to_bytes()).done())
    extracted = None
    if extract_model is None:
        com_th = yield from engine.commit_r(lanes * n, rng.expand(n, "r-theta"), ctx)
        com_x = yield from engine.commit_r(lanes * n, rng.expand(n, "r-x"), ctx)
    else:
        com_th, th_ext = yield from engine.extract_r(lanes * n, rng.expand(n, "r-theta"), ctx,
                                                     extract_model.expand(n, "c-theta"))
        com_x, x_ext = yield from engine.extract_r(lanes * n, rng.expand(n, "r-x"), ctx,
                                                   extract_model.expand(n, "c-x"))
        extracted = {"theta_hat": th_ext.reshape(lanes, n), "x_hat": x_ext.reshape(lanes, n)}
    T = rng.child("T").subsets(n, n_test)
    yield ctx.msg(MsgType.TEST_SET, Encoder().ints(T).done())
    tmask = _mask(T, n)
    allowed = tmask.reshape(-1, 1)
    _, th_hat, ok_th = yield from engine.open_r([com_th], allowed, ctx)
    _, x_hat, ok_x = yield from engine.open_r([com_x], allowed, ctx)
    th_hat, x_hat = th_hat.reshape(lanes, n), x_hat.reshape(lanes, n)
    opened_ok = (ok_th & ok_x).reshape(lanes, n)
    match = tmask & (theta == th_hat)
    fail = tmask & (~opened_ok | (match & (x != x_hat)))
    bad = fail.any(axis=1)
    first = np.where(bad, np.argmax(fail, axis=1), -1)
    return CheckSender(x, theta, T, _survivors(T, n), bad, first, match.sum(axis=1), extracted)


def check_receive(engine: CommitEngine, lanes: int, n: int, n_test: int, rng: LaneRng, ctx: Ctx,
                  strategy=None):
    """Receiver side: measure (per strategy), commit to bases and outcomes, open on T."""
    strategy = strategy or HonestMeasure()
    qubits = yield from recv_qubits(lanes, n)
    theta_hat, x_hat = strategy(qubits, rng)
    com_th = yield from engine.commit_c(theta_hat.reshape(-1), rng.expand(n, "c-theta"), ctx)
    com_x = yield from engine.commit_c(x_hat.reshape(-1), rng.expand(n, "c-x"), ctx)
    T = yield from recv_test_set(lanes, n, n_test)
    sel = np.where(_mask(T, n).reshape(-1), 0, -1)
    yield from engine.open_c([com_th], sel, ctx)
    yield from engine.open_c([com_x], sel, ctx)
    return CheckReceiver(qubits, theta_hat, x_hat, T, _survivors(T, n), com_th, com_x)


def recv_qubits(lanes, n):
    msg = yield from tp.recv(MsgType.QUBIT_BATCH)
    d = Decoder(msg.payload)
    if (d.u32(), d.u32()) != (lanes, n):
        raise ProtocolViolation("qubit batch shape")
    q = QubitArray.from_bytes(d.raw(), (lanes, n))
    d.done()
    return q


def recv_test_set(lanes, n, n_test):
    msg = yield from tp.recv(MsgType.TEST_SET)
    d = Decoder(msg.payload)
    T = d.ints().astype(np.int64)
    d.done()
    if (T.shape != (lanes, n_test) or np.any(T >= n)
            or np.any(np.diff(T, axis=1) <= 0)):
        raise ProtocolViolation("test set must be sorted distinct indices")
    return T


def check_extract(engine, lanes, n, n_test, rng: LaneRng, model: LaneRng, ctx: Ctx):
    """Extractor side of the check: equivocal commitments, qubits left unmeasured.

    On T the extractor measures in fresh random bases and opens its
    equivocal commitments to those bases and outcomes.
    """
    qubits = yield from recv_qubits(lanes, n)
    gen = np.random.default_rng(rng.child("rekey").words(2).reshape(-1))
    com_th = yield from engine.equivocate_c(lanes * n, rng.expand(n, "c-theta"), gen,
                                            model.expand(n, "r-theta"), ctx)
    com_x = yield from engine.equivocate_c(lanes * n, rng.expand(n, "c-x"), gen,
                                           model.expand(n, "r-x"), ctx)
    T = yield from recv_test_set(lanes, n, n_test)
    tmask = _mask(T, n)
    theta_hat = rng.child("fresh").bits(n)
    x_hat = qubits.measure_at(tmask, theta_hat, rng.child("coins").bits(n))
    sel = np.where(tmask.reshape(-1), 0, -1)
    yield from engine.open_c([com_th], sel, ctx, claim=theta_hat.reshape(-1))
    yield from engine.open_c([com_x], sel, ctx, claim=x_hat.reshape(-1))
    return CheckReceiver(qubits, theta_hat, x_hat, T, _survivors(T, n), com_th, com_x)


def recv_bases(lanes, n_surv):
    msg = yield from tp.recv(MsgType.BASIS_REVEAL)
    d = Decoder(msg.payload)
    th = d.bits()
    d.done()
    if th.shape != (lanes, n_surv):
        raise ProtocolViolation("basis reveal shape")
    return th


def take(a: np.ndarray, idx: np.ndarray) -> np.ndarray:
    return np.take_along_axis(a, idx, axis=1)


# --------------------------------------------------------------------------
# committer scripts


class HonestCommitter:
    name = "honest"

    def masks(self, b, d, rng):
        return b[:, None] ^ d

    def reveal(self, state, claim):
        return take(state.x, state.surv)


class CorruptBlocks(HonestCommitter):
    """Makes ``k`` random blocks inconsistent, then patches them at opening.

    Each corrupted block carries v = 1 - b xor h; the opening flips one bit of
    the block at a position where the seed is 1 so the hash line verifies,
    which is caught when the receiver's basis there matches.
    """

    def __init__(self, k: int):
        self.k = int(k)
        self.name = f"corrupt-{self.k}"

    def masks(self, b, d, rng):
        L, nb = d.shape
        order = np.argsort(rng.child("pick").words(nb), axis=1)[:, : self.k]
        self.bad = _mask(order, nb) if self.k else np.zeros((L, nb), dtype=bool)
        return (b[:, None] ^ d ^ self.bad).astype(np.uint8)

    def reveal(self, state, claim):
        xs = take(state.x, state.surv).copy()
        L, nb, bl = state.seeds.shape
        blocks = xs.reshape(L, nb, bl)
        ones = state.seeds.astype(bool)
        pos = np.argmax(ones, axis=2)
        can = ones.any(axis=2) & state.bad_blocks
        li, bi = np.nonzero(can)
        blocks[li, bi, pos[li, bi]] ^= 1
        return blocks.reshape(L, -1)


class FlipOneBit(HonestCommitter):
    """Honest commit; the opening flips one survivor bit of the first block."""

    name = "flip-one-bit"

    def reveal(self, state, claim):
        xs = take(state.x, state.surv).copy()
        xs[:, 0] ^= 1
        return xs


# --------------------------------------------------------------------------
# engine


@dataclass
class ExtCommitter:
    b: np.ndarray
    check: CheckSender
    seeds: np.ndarray   # (L, n_blocks, block_len)
    d: np.ndarray       # (L, n_blocks) hash lines
    v: np.ndarray       # (L, n_blocks) transmitted masks
    script: object = None
    bad_blocks: np.ndarray | None = None

    @property
    def x(self):
        return self.check.x

    @property
    def surv(self):
        return self.check.surv


@dataclass
class ExtReceiver:
    check: CheckReceiver
    theta_s: np.ndarray   # (L, n_surv) revealed bases on survivors
    seeds: np.ndarray
    v: np.ndarray
    decommit: dict = field(default_factory=dict)
    report: dict = field(default_factory=dict)


class ExtcomEngine(CommitEngine):
    name = "extcom"

    def __init__(self, params: ExtParams, inner: CommitEngine | None = None, strict: bool = True,
                 measure=None):
        self.params = params
        self.inner = inner or default_inner(params.lam)
        self.strict = strict
        self.measure = measure or HonestMeasure()

    def describe(self) -> str:
        p = self.params
        return f"extcom[n={p.n_total}, t={p.n_test}, blocks={p.n_blocks}x{p.block_len}, {self.inner.describe()}]"

    def _hash(self, seeds, xs):
        p = self.params
        L = xs.shape[0]
        blocks = xs.reshape(L * p.n_blocks, p.block_len)
        return hash_many(p.hash, seeds.reshape(L * p.n_blocks, -1), blocks).reshape(L, p.n_blocks)

    def commit_c(self, bits, rng, ctx=Ctx(), script=None):
        p = self.params
        script = script or HonestCommitter()
        b = np.asarray(bits, dtype=np.uint8).reshape(-1)
        L = b.size
        try:
            chk = yield from check_send(self.inner, L, p.n_total, p.n_test, rng, ctx)
        except ReceiverAbort as e:
            raise CommitterAbort(f"sub-commitment check failed: {e.detail}", e.iteration, e.index)
        if chk.bad.any() and self.strict:
            lane = int(np.flatnonzero(chk.bad)[0])
            raise CommitterAbort("measurement check failed", lane, int(chk.first_bad[lane]))
        theta_s = take(chk.theta, chk.surv)
        yield ctx.msg(MsgType.BASIS_REVEAL, Encoder().bits(theta_s).done())
        seeds = rng.child("seeds").bits(p.n_blocks * p.block_len).reshape(L, p.n_blocks, p.block_len)
        d = self._hash(seeds, take(chk.x, chk.surv))
        v = np.asarray(script.masks(b, d, rng.child("script")), dtype=np.uint8)
        yield ctx.msg(MsgType.MASKED_LINES, Encoder().bits(seeds).bits(v).done())
        return ExtCommitter(b, chk, seeds, d, v, script, getattr(script, "bad", None))

    def _finish_receive(self, chk, L):
        p = self.params
        theta_s = yield from recv_bases(L, p.n_surv)
        msg = yield from tp.recv(MsgType.MASKED_LINES)
        d = Decoder(msg.payload)
        seeds, v = d.bits(), d.bits()
        d.done()
        if seeds.shape != (L, p.n_blocks, p.block_len) or v.shape != (L, p.n_blocks):
            raise ProtocolViolation("masked line shape")
        return theta_s, seeds, v

    def commit_r(self, lanes, rng, ctx=Ctx()):
        p = self.params
        chk = yield from check_receive(self.inner, lanes, p.n_total, p.n_test, rng, ctx, self.measure)
        theta_s, seeds, v = yield from self._finish_receive(chk, lanes)
        return ExtReceiver(chk, theta_s, seeds, v)

    def extract_r(self, lanes, rng, ctx=Ctx(), model=None):
        """The delayed-measurement extractor; ``model`` is the committer's keystream.

        Returns ``(state, b_star)``; ``state.report`` holds the per-block bits
        and tie flags.
        """
        p = self.params
        if model is None:
            raise ValueError("the extractor needs the committer's keystream")
        try:
            chk = yield from check_extract(self.inner, lanes, p.n_total, p.n_test, rng, model, ctx)
            theta_s, seeds, v = yield from self._finish_receive(chk, lanes)
        except (PeerAborted, PeerClosed) as e:
            raise ExtractAbort(f"committer stopped: {e}")
        smask = _mask(chk.surv, p.n_total)
        bases = np.zeros_like(chk.theta_hat)
        np.put_along_axis(bases, chk.surv, theta_s, axis=1)
        measured = chk.qubits.measure_at(smask, bases, rng.child("coins-s").bits(p.n_total))
        chk.x_hat = np.where(smask, measured, chk.x_hat).astype(np.uint8)
        per_block = self._hash(seeds, take(chk.x_hat, chk.surv)) ^ v
        ones = per_block.sum(axis=1)
        tie = 2 * ones == p.n_blocks
        b_star = (2 * ones > p.n_blocks).astype(np.int64)
        st = ExtReceiver(chk, theta_s, seeds, v)
        st.report = {"per_block_bits": per_block, "tie": tie, "b_star": b_star}
        return st, b_star

    def open_c(self, states, sel, ctx=Ctx(), claim=None):
        sel = np.asarray(sel, dtype=np.int64)
        L = sel.size
        lanes = np.arange(L)
        live = sel >= 0
        idx = np.maximum(sel, 0)
        bits = np.stack([s.b for s in states])[idx, lanes] if claim is None else np.asarray(claim)
        reveals = np.stack([s.script.reveal(s, None) for s in states])[idx, lanes]
        bits = np.where(live, bits, 0).astype(np.uint8)
        reveals = (reveals * live[:, None]).astype(np.uint8)
        yield ctx.msg(MsgType.OPEN_BLOCKS,
                      Encoder().ints(encode_sel(sel)).bits(bits).bits(reveals).done())

    def open_r(self, states, allowed, ctx=Ctx()):
        p = self.params
        msg = yield from tp.recv(MsgType.OPEN_BLOCKS)
        d = Decoder(msg.payload)
        sel = decode_sel(d.ints())
        bits, xs = d.bits(), d.bits()
        d.done()
        L = states[0].v.shape[0]
        if sel.shape != (L,) or bits.shape != (L,) or xs.shape != (L, p.n_surv):
            raise ProtocolViolation("opening shape")
        lanes = np.arange(L)
        allowed = np.asarray(allowed, dtype=bool).reshape(L, -1)
        in_range = (sel >= 0) & (sel < len(states))
        idx = np.where(in_range, sel, 0)
        ok = in_range & allowed[lanes, np.minimum(idx, allowed.shape[1] - 1)]
        seeds = np.stack([s.seeds for s in states])[idx, lanes]
        v = np.stack([s.v for s in states])[idx, lanes]
        theta_s = np.stack([s.theta_s for s in states])[idx, lanes]
        th_hat = np.stack([take(s.check.theta_hat, s.check.surv) for s in states])[idx, lanes]
        x_hat = np.stack([take(s.check.x_hat, s.check.surv) for s in states])[idx, lanes]
        line_ok = (self._hash(seeds, xs) ^ v) == bits[:, None]
        pos_bad = (th_hat == theta_s) & (x_hat != xs)
        ok &= line_ok.all(axis=1) & ~pos_bad.any(axis=1)
        if len(states) == 1:
            first_line = np.where(~line_ok.all(axis=1), np.argmin(line_ok, axis=1), -1)
            first_pos = np.where(pos_bad.any(axis=1), np.argmax(pos_bad, axis=1), -1)
            states[0].decommit.update(ok=ok, bits=bits, first_bad_line=first_line,
                                      first_bad_position=first_pos)
        return sel, bits, ok

    def fingerprint(self, rstate):
        return rstate.v[:, 0].copy()


# --------------------------------------------------------------------------
# single-call helpers


@dataclass
class ExtRun:
    committer: ExtCommitter
    receiver: ExtReceiver
    transcript: tp.Transcript


def ext_commit(engine: ExtcomEngine, b, crng: LaneRng, rrng: LaneRng, script=None,
               transcript=None) -> ExtRun:
    bits = np.atleast_1d(np.asarray(b, dtype=np.uint8))
    transcript = transcript if transcript is not None else tp.Transcript()
    out_c, out_r = run_pair(engine.commit_c(bits, crng, script=script),
                            engine.commit_r(bits.size, rrng), transcript)
    for out in (out_c, out_r):
        if not out.ok:
            raise out.abort
    return ExtRun(out_c.value, out_r.value, transcript)


def ext_decommit(engine: ExtcomEngine, run: ExtRun, claim=None):
    """Returns (ok, bits) per lane; reasons land in ``run.receiver.decommit``."""
    L = run.committer.b.size
    out_c, out_r = run_pair(engine.open_c([run.committer], sel_all(L), claim=claim),
                            engine.open_r([run.receiver], np.ones((L, 1), dtype=bool)),
                            run.transcript)
    if not out_r.ok:
        raise out_r.abort
    _, bits, ok = out_r.value
    return ok, bits


@dataclass
class ExtractReport:
    b_star: list
    tie: list
    per_block_bits: list
    aborted: bool

    def to_json(self) -> str:
        return json.dumps({"b_star": self.b_star, "tie": self.tie,
                           "per_block_bits": self.per_block_bits, "aborted": self.aborted})


@dataclass
class ExtractRun:
    b_star: np.ndarray
    report: ExtractReport
    committer: ExtCommitter | None
    receiver: ExtReceiver | None
    accepted: np.ndarray | None = None
    opened: np.ndarray | None = None


def ext_extract(engine: ExtcomEngine, bits, crng: LaneRng, rng: LaneRng, script=None,
                then_open: bool = True) -> ExtractRun:
    """Run the extractor against a scripted committer; optionally let the committer open.

    The committer's keystream ``crng`` doubles as the white-box model the
    extractor needs to rehearse its equivocal sub-commitments.
    """
    bits = np.atleast_1d(np.asarray(bits, dtype=np.uint8))
    L = bits.size
    out_c, out_r = run_pair(engine.commit_c(bits, crng, script=script),
                            engine.extract_r(L, rng, model=crng))
    if not out_r.ok or not out_c.ok:
        rep = ExtractReport([], [], [], True)
        return ExtractRun(np.full(L, -1), rep, None, None)
    st, b_star = out_r.value
    rep = ExtractReport(b_star.tolist(), st.report["tie"].tolist(),
                        st.report["per_block_bits"].tolist(), False)
    run = ExtractRun(b_star, rep, out_c.value, st)
    if then_open:
        oc, orr = run_pair(engine.open_c([out_c.value], sel_all(L)),
                           engine.open_r([st], np.ones((L, 1), dtype=bool)))
        if not orr.ok:
            raise orr.abort
        _, opened, ok = orr.value
        run.accepted, run.opened = ok, opened
    return run


# --------------------------------------------------------------------------
# hiding probe


@dataclass
class HidingProbe:
    strategy: str
    mode: str
    distance: float
    min_entropy: float
    bound: float
    sigma: float = 0.0

    @property
    def within_bound(self) -> bool:
        return self.distance <= self.bound + 4 * self.sigma

    def as_dict(self) -> dict:
        return {"strategy": self.strategy, "mode": self.mode, "distance": self.distance,
                "min_entropy": self.min_entropy, "bound": self.bound, "sigma": self.sigma,
                "within_bound": self.within_bound,
                "formula": "distance <= 2^-(1 + (H - 1) / 2), H = average conditional min-entropy of the block"}


def _known_fraction(strategy: str) -> float:
    """Probability that the receiver knows a survivor bit after the commit phase."""
    return {"honest": 0.5, "clairvoyant": 1.0, "non-measuring": 0.0}[strategy]


EXHAUSTIVE_MAX = 16


def hiding_probe(params: ExtParams, strategy: str = "honest", trials: int = 0,
                 rng: np.random.Generator | None = None) -> HidingProbe:
    """Distance between the receiver's commit views for b = 0 and b = 1.

    Given the view, a block's hash bit is fixed exactly when every seed-1
    position of the block is known to the receiver; otherwise it is a
    uniform bit.  The views for the two values of b differ by the
    probability that some block is fixed.  ``trials == 0`` enumerates every
    (knowledge pattern, seed) combination exactly; otherwise runs the
    protocol ``trials`` times and averages.
    """
    q = _known_fraction(strategy)
    bl, nb = params.block_len, params.n_blocks
    if trials == 0:
        if params.n_total > EXHAUSTIVE_MAX or nb != 1:
            raise DomainTooLarge("exhaustive probe needs n_total <= 16 and one block")
        from .hashing import index_bits

        pats = index_bits(bl).astype(bool)
        pk = np.where(pats, q, 1 - q).prod(axis=1)      # pattern probabilities
        seeds = index_bits(bl).astype(bool)
        fixed = ~(seeds[None, :, :] & ~pats[:, None, :]).any(axis=2)  # (pattern, seed)
        dist = float((pk[:, None] * fixed).sum() / 2**bl)
        guess = float((pk * 2.0 ** -(~pats).sum(axis=1)).sum())
        h = -math.log2(guess)
        return HidingProbe(strategy, "exhaustive", dist, h, min(1.0, lhl_bound(h, 1)))
    rng = rng or np.random.default_rng(0)
    measure = {"honest": HonestMeasure(), "clairvoyant": Clairvoyant(),
               "non-measuring": NonMeasuring()}[strategy]
    engine = ExtcomEngine(params, default_inner(1, 32), strict=False, measure=measure)
    crng = LaneRng.from_generator(rng, trials, 1)
    rrng = LaneRng.from_generator(rng, trials, 2)
    run = ext_commit(engine, rng.integers(0, 2, trials), crng, rrng)
    chk_c, chk_r = run.committer.check, run.receiver.check
    known = take(chk_r.theta_hat, chk_c.surv) == take(chk_c.theta, chk_c.surv)
    if strategy == "non-measuring":
        known[:] = False
    live = ~chk_c.bad
    seeds = run.committer.seeds.astype(bool)
    fixed = ~(seeds & ~known.reshape(trials, nb, bl)).any(axis=2)
    any_fixed = fixed.any(axis=1)[live]
    dist = float(any_fixed.mean()) if any_fixed.size else 0.0
    sigma = math.sqrt(max(dist * (1 - dist), 1e-12) / max(any_fixed.size, 1))
    unknown = (~known.reshape(trials, nb, bl)).sum(axis=2)[live]
    guess = float(np.mean(2.0 ** -unknown.min(axis=1))) if unknown.size else 1.0
    h = -math.log2(guess)
    return HidingProbe(strategy, "sampled", dist, h, min(1.0, lhl_bound(h, 1)), sigma)
