"""Simulated quantum substrate.

Three layers:

* ``SimQubit``: one transmitted qubit, either a symbolic BB84 state, half of
  an EPR pair, a collapsed measurement record, or an explicit single-qubit
  state.  Its content is only reachable through :func:`measure`.
* ``QubitArray``: a batch of symbolic BB84 qubits with vectorized lazy
  measurement, used on the protocol hot path.
* ``StateVector``: dense statevector engine (up to 12 qubits) for the
  rewinding and sampling labs.

Qubit 0 is the most significant bit of a statevector index.
"""
from __future__ import annotations

import enum
import itertools
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import (CapExceeded, IndexOutOfRange, NonUnitaryGate, ShapeMismatch,
                     UnknownEprPair)

MAX_QUBITS = 12
_NORM_TOL = 1e-12
_UNITARY_TOL = 1e-9


class Basis(enum.IntEnum):
    COMPUTATIONAL = 0  # "+"
    HADAMARD = 1  # "x"

    @property
    def symbol(self) -> str:
        return "+" if self == Basis.COMPUTATIONAL else "x"

    @classmethod
    def parse(cls, s) -> "Basis":
        if isinstance(s, str):
            return cls.COMPUTATIONAL if s in ("+", "0") else cls.HADAMARD
        return cls(int(s))


PLUS = Basis.COMPUTATIONAL
CROSS = Basis.HADAMARD


class Side(enum.IntEnum):
    A = 0
    B = 1


def _coin(rng) -> int:
    return int(rng.integers(0, 2))


# --------------------------------------------------------------------------
# EPR registry


@dataclass
class _PairRecord:
    # measurements so far: side -> (basis, outcome)
    done: dict = field(default_factory=dict)


class EprRegistry:
    """Correlated sampling for EPR pairs (|00> + |11>)/sqrt(2).

    The first measured half is a uniform bit.  The second half repeats that
    bit when measured in the same basis and is a fresh uniform bit otherwise.
    """

    def __init__(self):
        self._pairs: dict[int, _PairRecord] = {}
        self._next = 0

    def __len__(self) -> int:
        return len(self._pairs)

    def new_pair(self) -> int:
        pid = self._next
        self._next += 1
        self._pairs[pid] = _PairRecord()
        return pid

    def __contains__(self, pair_id) -> bool:
        return pair_id in self._pairs

    def state(self, pair_id) -> str:
        rec = self._get(pair_id)
        return ("unmeasured", "half_measured", "both_measured")[len(rec.done)]

    def _get(self, pair_id) -> _PairRecord:
        try:
            return self._pairs[pair_id]
        except KeyError:
            raise UnknownEprPair(pair_id) from None

    def measure(self, pair_id, side: Side, basis: Basis, rng) -> int:
        rec = self._get(pair_id)
        side = Side(side)
        other = Side(1 - side)
        if side in rec.done:
            prev_basis, prev = rec.done[side]
            if prev_basis == basis:
                return prev
            out = _coin(rng)
        elif other in rec.done and rec.done[other][0] == basis:
            out = rec.done[other][1]
        else:
            out = _coin(rng)
        rec.done[side] = (Basis(basis), out)
        return out


# --------------------------------------------------------------------------
# single qubits

_TAG_BB84, _TAG_EPR, _TAG_COLLAPSED, _TAG_EXPLICIT = 0, 1, 2, 3


class SimQubit:
    """A transmitted qubit; read it only with :func:`measure`."""

    __slots__ = ("_kind", "_a", "_b", "_registry")

    def __init__(self, kind: int, a, b, registry: EprRegistry | None = None):
        self._kind = kind
        self._a = a
        self._b = b
        self._registry = registry

    @property
    def kind(self) -> str:
        return ("BB84", "EprHalf", "Collapsed", "Explicit")[self._kind]

    def __repr__(self) -> str:
        return f"SimQubit<{self.kind}>"

    def to_bytes(self) -> bytes:
        if self._kind in (_TAG_BB84, _TAG_COLLAPSED):
            return bytes([self._kind, (int(self._a) << 1) | int(self._b)])
        if self._kind == _TAG_EXPLICIT:
            a0, a1 = complex(self._a), complex(self._b)
            return bytes([_TAG_EXPLICIT]) + struct.pack(">dddd", a0.real, a0.imag, a1.real, a1.imag)
        return bytes([_TAG_EPR]) + struct.pack(">QB", int(self._a), int(self._b))

    @classmethod
    def from_bytes(cls, buf: bytes, offset: int = 0, registry: EprRegistry | None = None):
        """Parse one qubit; returns ``(qubit, new_offset)``."""
        tag = buf[offset]
        if tag in (_TAG_BB84, _TAG_COLLAPSED):
            v = buf[offset + 1]
            return cls(tag, (v >> 1) & 1, Basis(v & 1)), offset + 2
        if tag == _TAG_EXPLICIT:
            r0, i0, r1, i1 = struct.unpack_from(">dddd", buf, offset + 1)
            return make_explicit(complex(r0, i0), complex(r1, i1)), offset + 33
        if tag == _TAG_EPR:
            pid, side = struct.unpack_from(">QB", buf, offset + 1)
            return cls(_TAG_EPR, pid, Side(side), registry), offset + 10
        raise ValueError(f"unknown qubit tag {tag}")


def make_bb84(bit: int, basis: Basis) -> SimQubit:
    if bit not in (0, 1):
        raise ValueError("bit must be 0 or 1")
    return SimQubit(_TAG_BB84, int(bit), Basis(basis))


def make_explicit(amp0: complex, amp1: complex) -> SimQubit:
    norm = abs(amp0) ** 2 + abs(amp1) ** 2
    if abs(norm - 1.0) > _NORM_TOL:
        raise ValueError(f"amplitudes not normalized (|a|^2 sum = {norm})")
    return SimQubit(_TAG_EXPLICIT, complex(amp0), complex(amp1))


def make_epr_pairs(k: int, registry: EprRegistry) -> list[tuple[SimQubit, SimQubit]]:
    if k < 1:
        raise ValueError("need at least one EPR pair")
    out = []
    for _ in range(k):
        pid = registry.new_pair()
        out.append((SimQubit(_TAG_EPR, pid, Side.A, registry),
                    SimQubit(_TAG_EPR, pid, Side.B, registry)))
    return out


_INV_SQRT2 = 1 / math.sqrt(2)


def measure(q: SimQubit, basis: Basis, rng) -> int:
    """Measure ``q`` in ``basis``; ``q`` collapses to the outcome."""
    basis = Basis(basis)
    kind = q._kind
    if kind in (_TAG_BB84, _TAG_COLLAPSED):
        out = int(q._a) if q._b == basis else _coin(rng)
    elif kind == _TAG_EXPLICIT:
        a0, a1 = q._a, q._b
        if basis == Basis.HADAMARD:
            a0, a1 = (a0 + a1) * _INV_SQRT2, (a0 - a1) * _INV_SQRT2
        out = int(rng.random() >= abs(a0) ** 2)
    else:
        if q._registry is None:
            raise UnknownEprPair(q._a)
        out = q._registry.measure(q._a, q._b, basis, rng)
    q._kind, q._a, q._b, q._registry = _TAG_COLLAPSED, out, basis, None
    return out


# --------------------------------------------------------------------------
# batched BB84 qubits


class QubitArray:
    """A batch of symbolic BB84 qubits with vectorized lazy measurement."""

    __slots__ = ("_bits", "_bases", "_collapsed")

    def __init__(self, bits, bases, collapsed=None):
        self._bits = np.asarray(bits, dtype=np.uint8)
        self._bases = np.asarray(bases, dtype=np.uint8)
        if self._bits.shape != self._bases.shape:
            raise ShapeMismatch("bits and bases differ in shape")
        self._collapsed = (np.zeros(self._bits.shape, dtype=bool) if collapsed is None
                           else np.asarray(collapsed, dtype=bool))

    @property
    def shape(self):
        return self._bits.shape

    def __len__(self) -> int:
        return self._bits.shape[0]

    def measure(self, bases, coins) -> np.ndarray:
        """Measure every qubit in ``bases``; ``coins`` decide conjugate-basis outcomes."""
        bases = np.broadcast_to(np.asarray(bases, dtype=np.uint8), self.shape)
        out = kernels.bb84_measure(self._bits, self._bases, bases, coins)
        self._bits = out
        self._bases = np.array(bases, dtype=np.uint8)
        self._collapsed = np.ones(self.shape, dtype=bool)
        return out.copy()

    def measure_at(self, mask, bases, coins) -> np.ndarray:
        """Measure only positions where ``mask`` holds; returns outcomes there (others 0)."""
        mask = np.asarray(mask, dtype=bool)
        bases = np.broadcast_to(np.asarray(bases, dtype=np.uint8), self.shape)
        out = kernels.bb84_measure(self._bits, self._bases, bases, coins)
        self._bits = np.where(mask, out, self._bits).astype(np.uint8)
        self._bases = np.where(mask, bases, self._bases).astype(np.uint8)
        self._collapsed = self._collapsed | mask
        return np.where(mask, out, 0).astype(np.uint8)

    def reshape(self, *shape) -> "QubitArray":
        return QubitArray(self._bits.reshape(*shape), self._bases.reshape(*shape),
                          self._collapsed.reshape(*shape))

    def to_bytes(self) -> bytes:
        """Concatenated single-qubit encodings, row-major."""
        flat_b = self._bits.reshape(-1)
        out = np.empty((flat_b.size, 2), dtype=np.uint8)
        out[:, 0] = np.where(self._collapsed.reshape(-1), _TAG_COLLAPSED, _TAG_BB84)
        out[:, 1] = (flat_b << 1) | self._bases.reshape(-1)
        return out.tobytes()

    @classmethod
    def from_bytes(cls, buf: bytes, shape) -> "QubitArray":
        raw = np.frombuffer(buf, dtype=np.uint8).reshape(-1, 2)
        if raw.shape[0] != int(np.prod(shape)):
            raise ShapeMismatch("qubit count does not match shape")
        if np.any((raw[:, 0] != _TAG_BB84) & (raw[:, 0] != _TAG_COLLAPSED)):
            raise ValueError("qubit batches carry BB84 or collapsed qubits only")
        return cls(((raw[:, 1] >> 1) & 1).reshape(shape), (raw[:, 1] & 1).reshape(shape),
                   (raw[:, 0] == _TAG_COLLAPSED).reshape(shape))

    def to_simqubits(self) -> list[SimQubit]:
        tags = np.where(self._collapsed.reshape(-1), _TAG_COLLAPSED, _TAG_BB84)
        return [SimQubit(int(t), int(b), Basis(int(s)))
                for t, b, s in zip(tags, self._bits.reshape(-1), self._bases.reshape(-1))]


def encode_bb84(bits, bases) -> QubitArray:
    return QubitArray(bits, bases)


# --------------------------------------------------------------------------
# statevector engine

_S2 = 1 / math.sqrt(2)


def _rx(t):
    c, s = math.cos(t / 2), math.sin(t / 2)
    return np.array([[c, -1j * s], [-1j * s, c]])


def _ry(t):
    c, s = math.cos(t / 2), math.sin(t / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def _rz(t):
    return np.array([[np.exp(-0.5j * t), 0], [0, np.exp(0.5j * t)]])


def _controlled(u):
    m = np.eye(4, dtype=complex)
    m[2:, 2:] = u
    return m


GATES_1Q = {
    "I": lambda: np.eye(2, dtype=complex),
    "X": lambda: np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": lambda: np.array([[0, -1j], [1j, 0]]),
    "Z": lambda: np.diag([1, -1]).astype(complex),
    "H": lambda: np.array([[_S2, _S2], [_S2, -_S2]], dtype=complex),
    "S": lambda: np.diag([1, 1j]),
    "SDG": lambda: np.diag([1, -1j]),
    "T": lambda: np.diag([1, np.exp(0.25j * math.pi)]),
    "TDG": lambda: np.diag([1, np.exp(-0.25j * math.pi)]),
    "RX": _rx,
    "RY": _ry,
    "RZ": _rz,
    "P": lambda t: np.diag([1, np.exp(1j * t)]),
}

GATES_2Q = {
    "CX": lambda: _controlled(GATES_1Q["X"]()),
    "CNOT": lambda: _controlled(GATES_1Q["X"]()),
    "CZ": lambda: np.diag([1, 1, 1, -1]).astype(complex),
    "SWAP": lambda: np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex),
    "CRY": lambda t: _controlled(_ry(t)),
    "CRZ": lambda t: _controlled(_rz(t)),
}


def gate_matrix(name: str, params=()) -> np.ndarray:
    key = name.upper()
    table = GATES_1Q if key in GATES_1Q else GATES_2Q
    if key not in table:
        raise ValueError(f"unknown gate {name!r}")
    return np.asarray(table[key](*params), dtype=complex)


class StateVector:
    """Dense n-qubit pure state, n <= 12."""

    __slots__ = ("n_qubits", "amplitudes")

    def __init__(self, n_qubits: int, amplitudes=None):
        if not 1 <= n_qubits <= MAX_QUBITS:
            raise CapExceeded(f"statevector supports 1..{MAX_QUBITS} qubits, got {n_qubits}")
        self.n_qubits = n_qubits
        if amplitudes is None:
            amplitudes = np.zeros(2**n_qubits, dtype=complex)
            amplitudes[0] = 1.0
        amplitudes = np.asarray(amplitudes, dtype=complex).reshape(-1)
        if amplitudes.size != 2**n_qubits:
            raise ShapeMismatch(f"need {2**n_qubits} amplitudes, got {amplitudes.size}")
        self.amplitudes = amplitudes

    @classmethod
    def basis_state(cls, n_qubits: int, index: int) -> "StateVector":
        a = np.zeros(2**n_qubits, dtype=complex)
        a[index] = 1.0
        return cls(n_qubits, a)

    def copy(self) -> "StateVector":
        return StateVector(self.n_qubits, self.amplitudes.copy())

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def prob_one(self, qubit: int) -> float:
        _check_index(qubit, self.n_qubits)
        t = self.probabilities().reshape((2,) * self.n_qubits)
        return float(np.moveaxis(t, qubit, 0)[1].sum())


def _check_index(q, n):
    if not 0 <= q < n:
        raise IndexOutOfRange(f"qubit {q} outside 0..{n - 1}")


def _check_unitary(u):
    d = u.shape[0]
    if u.shape != (d, d) or np.max(np.abs(u.conj().T @ u - np.eye(d))) > _UNITARY_TOL:
        raise NonUnitaryGate("gate is not unitary within 1e-9")


def sv_apply(state: StateVector, gate, targets, params=()) -> StateVector:
    """Apply a named or explicit 1-/2-qubit gate; returns a new state."""
    u = gate_matrix(gate, params) if isinstance(gate, str) else np.asarray(gate, dtype=complex)
    targets = [int(t) for t in np.atleast_1d(targets)]
    for t in targets:
        _check_index(t, state.n_qubits)
    _check_unitary(u)
    if u.shape == (2, 2) and len(targets) == 1:
        amps = kernels.apply_1q(state.amplitudes, u, targets[0], state.n_qubits)
    elif u.shape == (4, 4) and len(targets) == 2 and targets[0] != targets[1]:
        amps = kernels.apply_2q(state.amplitudes, u, targets[0], targets[1], state.n_qubits)
    else:
        raise ShapeMismatch("gate size does not match target count")
    return StateVector(state.n_qubits, amps)


def sv_project(state: StateVector, qubit: int, bit: int) -> tuple[float, StateVector | None]:
    """Project ``qubit`` on ``bit``; returns (probability, normalized branch or None)."""
    _check_index(qubit, state.n_qubits)
    t = state.amplitudes.reshape((2,) * state.n_qubits).copy()
    sl = [slice(None)] * state.n_qubits
    sl[qubit] = 1 - bit
    t[tuple(sl)] = 0
    amps = t.reshape(-1)
    p = float(np.vdot(amps, amps).real)
    if p <= 0:
        return 0.0, None
    return p, StateVector(state.n_qubits, amps / math.sqrt(p))


def sv_measure(state: StateVector, qubit: int, rng) -> tuple[int, StateVector]:
    p1 = state.prob_one(qubit)
    bit = int(rng.random() < p1)
    _, post = sv_project(state, qubit, bit)
    return bit, post


# --------------------------------------------------------------------------
# distances


def trace_distance(p, q) -> float:
    """Half the L1 distance of two distributions, or half the trace norm of rho - sigma.

    Accepts 1-D probability vectors, dicts outcome -> probability (supports
    are merged), or square density matrices of equal size.
    """
    if isinstance(p, dict) or isinstance(q, dict):
        if not (isinstance(p, dict) and isinstance(q, dict)):
            raise ShapeMismatch("cannot compare a mapping with an array")
        keys = set(p) | set(q)
        return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)
    p = np.asarray(p)
    q = np.asarray(q)
    if p.shape != q.shape:
        raise ShapeMismatch(f"shapes {p.shape} and {q.shape} differ")
    if p.ndim == 1:
        return float(0.5 * np.abs(p - q).sum())
    if p.ndim == 2 and p.shape[0] == p.shape[1]:
        if p.shape[0] > 2**MAX_QUBITS:
            raise CapExceeded("density matrix above 12 qubits")
        d = p - q
        ev = np.linalg.eigvalsh(0.5 * (d + d.conj().T))
        return float(min(1.0, 0.5 * np.abs(ev).sum()))
    raise ShapeMismatch("expected a distribution or a square density matrix")


def density(state: StateVector) -> np.ndarray:
    a = state.amplitudes
    return np.outer(a, a.conj())


def partial_trace(rho: np.ndarray, n: int, keep) -> np.ndarray:
    """Reduce an n-qubit density matrix to the qubits in ``keep`` (kept in order)."""
    keep = list(keep)
    drop = [i for i in range(n) if i not in keep]
    t = rho.reshape((2,) * (2 * n))
    perm = keep + drop + [n + i for i in keep] + [n + i for i in drop]
    t = t.transpose(perm)
    k, r = 2 ** len(keep), 2 ** len(drop)
    t = t.reshape(k, r, k, r)
    return np.einsum("ajbj->ab", t)


def all_bitstrings(n: int):
    return itertools.product((0, 1), repeat=n)
