"""Statevector lab for rewinding a circuit toward its b = 0 branch.

A circuit acts on n input qubits plus ancillas initialised to |0>, ends by
measuring ``output_qubit`` as b, and keeps ``residual`` qubits as output.
The rewinder runs the circuit; on b = 1 it applies the inverse, flips the
phase of everything outside the ancilla-zero subspace, and runs the circuit
again, up to a fixed number of attempts.  All branches are tracked exactly
(unnormalised), so the output density matrix has no sampling noise.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import CapExceeded, HypothesisViolated, ZeroSuccessProbability
from .qsim import MAX_QUBITS, StateVector, gate_matrix, partial_trace, sv_apply, trace_distance

MAX_INPUTS = 10


@dataclass(frozen=True)
class Gate:
    name: str
    targets: tuple
    params: tuple = ()

    def matrix(self) -> np.ndarray:
        return gate_matrix(self.name, self.params)


@dataclass
class GeneralCircuit:
    n_inputs: int
    n_ancillas: int
    gates: list
    output_qubit: int
    residual: tuple | None = None  # default: every qubit except the output one

    def __post_init__(self):
        self.gates = [g if isinstance(g, Gate) else Gate(g[0], tuple(g[1]), tuple(g[2]) if len(g) > 2 else ())
                      for g in self.gates]
        if self.n_inputs > MAX_INPUTS:
            raise CapExceeded(f"at most {MAX_INPUTS} input qubits")
        if self.n_qubits > MAX_QUBITS:
            raise CapExceeded(f"inputs plus ancillas exceed {MAX_QUBITS}")
        for g in self.gates:
            if any(not 0 <= t < self.n_qubits for t in g.targets):
                raise ValueError(f"gate {g.name} targets outside the register")
        if not 0 <= self.output_qubit < self.n_qubits:
            raise ValueError("output qubit outside the register")
        if self.residual is None:
            self.residual = tuple(q for q in range(self.n_qubits) if q != self.output_qubit)

    @property
    def n_qubits(self) -> int:
        return self.n_inputs + self.n_ancillas

    # inputs occupy the first qubits (most significant), ancillas the rest
    def embed(self, psi) -> StateVector:
        psi = np.asarray(psi, dtype=complex).reshape(-1)
        if psi.size != 2**self.n_inputs:
            raise ValueError("input state has the wrong dimension")
        full = np.zeros(2**self.n_qubits, dtype=complex)
        full[:: 2**self.n_ancillas] = psi
        return StateVector(self.n_qubits, full)

    def forward(self, sv: StateVector) -> StateVector:
        for g in self.gates:
            sv = sv_apply(sv, g.name, g.targets, g.params)
        return sv

    def inverse(self, sv: StateVector) -> StateVector:
        for g in reversed(self.gates):
            sv = sv_apply(sv, g.matrix().conj().T, g.targets)
        return sv

    def to_json(self) -> dict:
        return {"n": self.n_inputs, "ancillas": self.n_ancillas, "output_qubit": self.output_qubit,
                "residual": list(self.residual),
                "gates": [{"name": g.name, "targets": list(g.targets), "params": list(g.params)}
                          for g in self.gates]}

    @classmethod
    def from_json(cls, d: dict) -> "GeneralCircuit":
        gates = [Gate(g["name"], tuple(g["targets"]), tuple(g.get("params", ()))) for g in d["gates"]]
        res = d.get("residual")
        return cls(d["n"], d.get("ancillas", 0), gates, d["output_qubit"],
                   tuple(res) if res is not None else None)


# --------------------------------------------------------------------------
# branch arithmetic on unnormalised vectors


def _split(amps: np.ndarray, n: int, qubit: int):
    """(b = 0 part, b = 1 part) of an unnormalised vector."""
    t = amps.reshape((2,) * n)
    zero = np.zeros_like(t)
    one = np.zeros_like(t)
    sl0 = [slice(None)] * n
    sl0[qubit] = 0
    sl1 = list(sl0)
    sl1[qubit] = 1
    zero[tuple(sl0)] = t[tuple(sl0)]
    one[tuple(sl1)] = t[tuple(sl1)]
    return zero.reshape(-1), one.reshape(-1)


def _residual_density(circuit: GeneralCircuit, amps: np.ndarray) -> np.ndarray:
    rho = np.outer(amps, amps.conj())
    return partial_trace(rho, circuit.n_qubits, circuit.residual)


def _sv(circuit, amps):
    # StateVector checks only the shape, so unnormalised branches pass through
    return StateVector(circuit.n_qubits, amps)


def success_probability(circuit: GeneralCircuit, psi) -> float:
    """Exact probability that b = 0 on input psi."""
    out = circuit.forward(circuit.embed(psi)).amplitudes
    zero, _ = _split(out, circuit.n_qubits, circuit.output_qubit)
    return float(np.vdot(zero, zero).real)


def ideal_conditional(circuit: GeneralCircuit, psi) -> np.ndarray:
    """Residual density matrix of the circuit conditioned on b = 0."""
    out = circuit.forward(circuit.embed(psi)).amplitudes
    zero, _ = _split(out, circuit.n_qubits, circuit.output_qubit)
    p = float(np.vdot(zero, zero).real)
    if p <= 1e-15:
        raise ZeroSuccessProbability("b = 0 has probability zero on this input")
    return _residual_density(circuit, zero) / p


def dense_conditional(circuit: GeneralCircuit, psi) -> np.ndarray:
    """Same quantity through full 2^N matrices (slow path kept for cross-checks)."""
    N = circuit.n_qubits
    U = np.eye(2**N, dtype=complex)
    for g in circuit.gates:
        U = _full_matrix(g.matrix(), g.targets, N) @ U
    v = U @ circuit.embed(psi).amplitudes
    P0 = _full_matrix(np.diag([1, 0]).astype(complex), (circuit.output_qubit,), N)
    rho = P0 @ np.outer(v, v.conj()) @ P0
    p = np.trace(rho).real
    if p <= 1e-15:
        raise ZeroSuccessProbability("b = 0 has probability zero on this input")
    return _trace_out(rho / p, N, circuit.residual)


def _full_matrix(u: np.ndarray, targets, n: int) -> np.ndarray:
    """Embed a k-qubit gate into n qubits by permuting tensor axes."""
    k = len(targets)
    rest = [q for q in range(n) if q not in targets]
    order = list(targets) + rest
    big = np.kron(u, np.eye(2 ** (n - k), dtype=complex)).reshape((2,) * (2 * n))
    inv = np.argsort(order)
    perm = list(inv) + [n + i for i in inv]
    return big.transpose(perm).reshape(2**n, 2**n)


def _trace_out(rho: np.ndarray, n: int, keep) -> np.ndarray:
    keep = list(keep)
    out = np.zeros((2 ** len(keep),) * 2, dtype=complex)
    for i in range(2**n):
        bi = [(i >> (n - 1 - q)) & 1 for q in range(n)]
        for j in range(2**n):
            bj = [(j >> (n - 1 - q)) & 1 for q in range(n)]
            if any(bi[q] != bj[q] for q in range(n) if q not in keep):
                continue
            a = sum(bi[q] << (len(keep) - 1 - r) for r, q in enumerate(keep))
            b = sum(bj[q] << (len(keep) - 1 - r) for r, q in enumerate(keep))
            out[a, b] += rho[i, j]
    return out


# --------------------------------------------------------------------------
# probes and hypotheses


def haar_state(dim: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return v / np.linalg.norm(v)


def probe_inputs(circuit: GeneralCircuit, n_random: int = 4, rng=None) -> list:
    """Every computational basis input plus ``n_random`` Haar-random inputs."""
    rng = rng if rng is not None else np.random.default_rng(0)
    d = 2**circuit.n_inputs
    probes = [np.eye(d, dtype=complex)[i] for i in range(d)]
    return probes + [haar_state(d, rng) for _ in range(n_random)]


def estimate_p(circuit: GeneralCircuit, probes) -> tuple[float, list]:
    ps = [success_probability(circuit, psi) for psi in probes]
    return min(ps), ps


@dataclass(frozen=True)
class RewindParams:
    p0: float
    q: float
    eps: float

    def iterations(self) -> int:
        """Attempt count with constant 1 in the size expression, log base 2."""
        return max(1, math.ceil(math.log2(1 / self.eps) / (4 * self.p0 * (1 - self.p0))))

    def bound(self) -> float:
        return 4 * math.sqrt(self.eps) * math.log2(1 / self.eps) / (self.p0 * (1 - self.p0))


def check_hypotheses(params: RewindParams, ps) -> None:
    if not 0 < params.eps < 1:
        raise HypothesisViolated("eps", f"eps={params.eps} outside (0, 1)")
    if not 0 < params.p0 < 1:
        raise HypothesisViolated("p0", f"p0={params.p0} outside (0, 1)")
    if params.p0 * (1 - params.p0) > params.q * (1 - params.q) + 1e-15:
        raise HypothesisViolated("p0-vs-q", "p0(1-p0) exceeds q(1-q)")
    worst = max(abs(p - params.q) for p in ps)
    if worst >= params.eps:
        raise HypothesisViolated("closeness", f"max |p - q| = {worst:.3g} is not below eps")
    if min(ps) < params.p0 - 1e-12:
        raise HypothesisViolated("lower", f"min p = {min(ps):.6g} is below p0")


# --------------------------------------------------------------------------
# the rewinder


@dataclass
class Rewinder:
    circuit: GeneralCircuit
    iterations: int

    def _reflect(self, amps: np.ndarray) -> np.ndarray:
        """2P - I with P the projector onto ancillas = 0."""
        c = self.circuit
        out = -amps
        out[:: 2**c.n_ancillas] = amps[:: 2**c.n_ancillas]
        return out

    def outputs(self, psi, attempts: int | None = None) -> list:
        """Residual densities after 1..attempts attempts (each entry has trace 1)."""
        c = self.circuit
        attempts = attempts or self.iterations
        n = c.n_qubits
        state = c.forward(c.embed(psi)).amplitudes
        done = np.zeros((2 ** len(c.residual),) * 2, dtype=complex)
        res = []
        for k in range(attempts):
            zero, one = _split(state, n, c.output_qubit)
            done = done + _residual_density(c, zero)
            res.append(done + _residual_density(c, one))
            if k + 1 < attempts:
                back = c.inverse(_sv(c, one)).amplitudes
                state = c.forward(_sv(c, self._reflect(back))).amplitudes
        return res

    def run(self, psi) -> np.ndarray:
        return self.outputs(psi)[-1]


def build_rewinder(circuit: GeneralCircuit, p0: float, q: float, eps: float,
                   probes=None) -> Rewinder:
    params = RewindParams(p0, q, eps)
    probes = probes if probes is not None else probe_inputs(circuit)
    _, ps = estimate_p(circuit, probes)
    check_hypotheses(params, ps)
    return Rewinder(circuit, params.iterations())


@dataclass
class RewindReport:
    p0: float
    q: float
    eps: float
    iterations: int
    td_measured: float
    td_bound: float
    passed: bool
    vacuous: bool
    td_trend: list = field(default_factory=list)
    trend_ok: bool = True
    max_trace_error: float = 0.0

    @property
    def status(self) -> str:
        if not self.passed:
            return "fail"
        return "vacuous-pass" if self.vacuous else "pass"

    def as_dict(self) -> dict:
        d = asdict(self)
        d["status"] = self.status
        d["formula"] = "TD(Q0(psi), Qhat(psi)) <= 4*sqrt(eps)*log2(1/eps)/(p0*(1-p0))"
        return d


def verify_bound(circuit: GeneralCircuit, inputs, params: RewindParams,
                 check_trend: bool = True) -> RewindReport:
    """Worst trace distance over ``inputs`` between Q_0 and the rewinder output."""
    _, ps = estimate_p(circuit, inputs)
    # b = 0 on every probe: one attempt already is Q_0, and the closeness
    # hypothesis cannot hold for any q < 1, so it is not checked
    certain = min(ps) >= 1 - 1e-12
    if not certain:
        check_hypotheses(params, ps)
    rw = Rewinder(circuit, 1 if certain else params.iterations())
    trend = np.zeros(rw.iterations)
    trace_err = 0.0
    for psi in inputs:
        ideal = ideal_conditional(circuit, psi)
        outs = rw.outputs(psi)
        tds = [trace_distance(ideal, o) for o in outs]
        trend = np.maximum(trend, tds)
        trace_err = max(trace_err, max(abs(np.trace(o).real - 1) for o in outs))
    td = float(trend[-1])
    bound = params.bound()
    trend_ok = bool(np.all(np.diff(trend) <= 1e-12)) if check_trend else True
    return RewindReport(params.p0, params.q, params.eps, rw.iterations, td, bound,
                        td <= min(1.0, bound), bound >= 1.0, [float(t) for t in trend],
                        trend_ok, float(trace_err))


# --------------------------------------------------------------------------
# corpus


def coin_circuit(n_inputs: int, p: float, depth: int, rng: np.random.Generator) -> GeneralCircuit:
    """Input-independent success probability p: the ancilla is rotated to
    cos(phi/2)|0> + sin(phi/2)|1> and afterwards only acts as a control."""
    anc = n_inputs
    phi = 2 * math.acos(math.sqrt(p))
    gates = [Gate("RY", (anc,), (phi,))]
    one_q = ["H", "S", "T", "RX", "RZ"]
    for _ in range(depth):
        kind = rng.integers(3)
        if kind == 0:
            name = one_q[rng.integers(len(one_q))]
            params = (float(rng.uniform(0, 2 * math.pi)),) if name in ("RX", "RZ") else ()
            gates.append(Gate(name, (int(rng.integers(n_inputs)),), params))
        elif kind == 1 and n_inputs > 1:
            a, b = rng.choice(n_inputs, 2, replace=False)
            gates.append(Gate("CX", (int(a), int(b))))
        else:
            name = ["CX", "CZ", "CRY"][rng.integers(3)]
            params = (float(rng.uniform(0, 2 * math.pi)),) if name == "CRY" else ()
            gates.append(Gate(name, (anc, int(rng.integers(n_inputs))), params))
    return GeneralCircuit(n_inputs, 1, gates, anc)


def default_corpus(count: int = 20, n_qubits: int = 4, q: float = 0.5, width: float = 0.01,
                   seed: int = 0, depth: int = 12) -> list:
    """Random circuits with p drawn strictly inside (q - width, q + width)."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        p = q + width * 0.98 * rng.uniform(-1, 1)
        out.append(coin_circuit(n_qubits - 1, p, depth, rng))
    return out


def load_corpus(path: str) -> list:
    with open(path) as f:
        data = json.load(f)
    return [GeneralCircuit.from_json(d) for d in data]


def rewind_lab(circuits, eps: float = 0.01, q: float = 0.5, n_random: int = 4,
               seed: int = 0) -> list:
    """One report per circuit; p0 is the smallest success probability seen on the probes."""
    rng = np.random.default_rng(seed)
    reports = []
    for c in circuits:
        probes = probe_inputs(c, n_random, rng)
        p_min, _ = estimate_p(c, probes)
        p0 = min(p_min, q) if p_min < 1 else q
        reports.append(verify_bound(c, probes, RewindParams(p0, q, eps)))
    return reports
