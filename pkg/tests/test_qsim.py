from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qotlab import qsim
from qotlab.errors import CapExceeded, IndexOutOfRange, NonUnitaryGate, ShapeMismatch, UnknownEprPair
from qotlab.qsim import CROSS, PLUS, Basis, EprRegistry, StateVector


def sigma(p, n):
    return math.sqrt(p * (1 - p) / n)


# ---------------------------------------------------------------- BB84 qubits


def test_make_bb84_constructor_identity():
    q = qsim.make_bb84(1, PLUS)
    assert q.kind == "BB84"
    assert q.to_bytes() == bytes([0, 0b10])
    assert qsim.make_bb84(0, CROSS).to_bytes() == bytes([0, 0b01])


def test_make_bb84_rejects_non_bits():
    with pytest.raises(ValueError):
        qsim.make_bb84(2, PLUS)


@pytest.mark.parametrize("bit", [0, 1])
@pytest.mark.parametrize("basis", [PLUS, CROSS])
def test_same_basis_readout_is_deterministic(bit, basis):
    rng = np.random.default_rng(0)
    assert all(qsim.measure(qsim.make_bb84(bit, basis), basis, rng) == bit for _ in range(200))


def test_conjugate_basis_is_uniform():
    rng = np.random.default_rng(1)
    n = 10_000
    ones = sum(qsim.measure(qsim.make_bb84(0, PLUS), CROSS, rng) for _ in range(n))
    assert abs(ones / n - 0.5) <= 3 * sigma(0.5, n)


def test_measurement_collapses():
    rng = np.random.default_rng(2)
    for _ in range(100):
        q = qsim.make_bb84(1, PLUS)
        first = qsim.measure(q, CROSS, rng)
        assert q.kind == "Collapsed"
        assert qsim.measure(q, CROSS, rng) == first


def test_basis_parse_symbols():
    assert Basis.parse("+") is PLUS and Basis.parse("x") is CROSS
    assert PLUS.symbol == "+" and CROSS.symbol == "x"


# ---------------------------------------------------------------- EPR pairs


def test_epr_pairs_registry_size():
    reg = EprRegistry()
    pairs = qsim.make_epr_pairs(1, reg)
    assert len(pairs) == 1 and len(reg) == 1


def test_epr_pairs_zero_is_an_error():
    with pytest.raises(ValueError):
        qsim.make_epr_pairs(0, EprRegistry())


def _bell_statevector_outcomes(basis_a, basis_b):
    """Joint outcome distribution of (|00>+|11>)/sqrt2 measured in the given bases."""
    sv = StateVector(2, np.array([1, 0, 0, 1]) / math.sqrt(2))
    if basis_a == CROSS:
        sv = qsim.sv_apply(sv, "H", 0)
    if basis_b == CROSS:
        sv = qsim.sv_apply(sv, "H", 1)
    return sv.probabilities()


@pytest.mark.parametrize("basis", [PLUS, CROSS])
def test_epr_same_basis_outcomes_equal(basis):
    # the statevector oracle puts all mass on 00 and 11
    probs = _bell_statevector_outcomes(basis, basis)
    assert probs[1] + probs[2] == pytest.approx(0.0, abs=1e-12)
    reg = EprRegistry()
    rng = np.random.default_rng(3)
    pairs = qsim.make_epr_pairs(10_000, reg)
    same = sum(qsim.measure(a, basis, rng) == qsim.measure(b, basis, rng) for a, b in pairs)
    assert same == 10_000


def test_epr_first_half_uniform():
    reg = EprRegistry()
    rng = np.random.default_rng(4)
    n = 10_000
    ones = sum(qsim.measure(a, PLUS, rng) for a, _ in qsim.make_epr_pairs(n, reg))
    assert abs(ones / n - 0.5) <= 3 * sigma(0.5, n)


def test_epr_mixed_bases_match_statevector_oracle():
    probs = _bell_statevector_outcomes(PLUS, CROSS)
    assert probs == pytest.approx([0.25] * 4)
    reg = EprRegistry()
    rng = np.random.default_rng(5)
    n = 10_000
    counts = np.zeros(4)
    for a, b in qsim.make_epr_pairs(n, reg):
        counts[2 * qsim.measure(a, PLUS, rng) + qsim.measure(b, CROSS, rng)] += 1
    assert np.all(np.abs(counts / n - 0.25) <= 4 * sigma(0.25, n))


def test_epr_state_tracking_and_unknown_pair():
    reg = EprRegistry()
    (a, b), = qsim.make_epr_pairs(1, reg)
    pid = reg.new_pair()
    assert reg.state(0) == "unmeasured"
    qsim.measure(a, PLUS, np.random.default_rng(0))
    assert reg.state(0) == "half_measured"
    with pytest.raises(UnknownEprPair):
        reg.measure(pid + 5, 0, PLUS, np.random.default_rng(0))


# ---------------------------------------------------------------- explicit and batched


def test_explicit_qubit_probabilities():
    rng = np.random.default_rng(6)
    n = 10_000
    amp = (math.sqrt(0.2), math.sqrt(0.8))
    ones = sum(qsim.measure(qsim.make_explicit(*amp), PLUS, rng) for _ in range(n))
    assert abs(ones / n - 0.8) <= 4 * sigma(0.8, n)
    with pytest.raises(ValueError):
        qsim.make_explicit(1, 1)


@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=40))
def test_qubit_array_bytes_roundtrip(pairs):
    bits = np.array([p[0] for p in pairs], np.uint8)
    bases = np.array([p[1] for p in pairs], np.uint8)
    qa = qsim.encode_bb84(bits, bases)
    back = qsim.QubitArray.from_bytes(qa.to_bytes(), bits.shape)
    assert back.to_bytes() == qa.to_bytes()
    # single-qubit encodings agree with the batch encoding
    assert b"".join(q.to_bytes() for q in qa.to_simqubits()) == qa.to_bytes()


@given(st.integers(0, 2**32 - 1))
def test_qubit_array_matches_single_qubit_semantics(seed):
    rng = np.random.default_rng(seed)
    bits, bases, meas = (rng.integers(0, 2, 64, dtype=np.uint8) for _ in range(3))
    coins = rng.integers(0, 2, 64, dtype=np.uint8)
    out = qsim.encode_bb84(bits, bases).measure(meas, coins)
    same = bases == meas
    assert np.array_equal(out[same], bits[same])
    assert np.array_equal(out[~same], coins[~same])


def test_measure_at_only_touches_mask():
    qa = qsim.encode_bb84(np.ones(6, np.uint8), np.zeros(6, np.uint8))
    mask = np.array([1, 0, 1, 0, 0, 0], bool)
    out = qa.measure_at(mask, np.ones(6, np.uint8), np.zeros(6, np.uint8))
    assert out.tolist() == [0, 0, 0, 0, 0, 0]
    rest = qa.measure(np.zeros(6, np.uint8), np.zeros(6, np.uint8))
    assert rest.tolist() == [0, 1, 0, 1, 1, 1]


# ---------------------------------------------------------------- statevector


def test_hadamard_on_zero():
    sv = qsim.sv_apply(StateVector(1), "H", 0)
    assert sv.amplitudes == pytest.approx([1 / math.sqrt(2), 1 / math.sqrt(2)])


def test_x_then_measure_gives_one():
    sv = qsim.sv_apply(StateVector(1), "X", 0)
    rng = np.random.default_rng(0)
    assert all(qsim.sv_measure(sv, 0, rng)[0] == 1 for _ in range(50))


def _dense_gate(u, targets, n):
    """Full 2^n matrix for ``u`` on ``targets`` (qubit 0 most significant), built by index permutation."""
    d = 2**n
    k = len(targets)
    m = np.zeros((d, d), dtype=complex)
    for col in range(d):
        bits = [(col >> (n - 1 - q)) & 1 for q in range(n)]
        sub = 0
        for t in targets:
            sub = 2 * sub + bits[t]
        for out_sub in range(2**k):
            nb = list(bits)
            for i, t in enumerate(targets):
                nb[t] = (out_sub >> (k - 1 - i)) & 1
            row = int("".join(map(str, nb)), 2)
            m[row, col] += u[out_sub, sub]
    return m


@given(st.integers(0, 2**32 - 1))
def test_random_three_qubit_circuit_matches_dense_oracle(seed):
    rng = np.random.default_rng(seed)
    n = 3
    sv = StateVector(n)
    dense = np.zeros(8, complex)
    dense[0] = 1
    names1 = ["H", "X", "Y", "Z", "S", "T", "RX", "RY", "RZ"]
    names2 = ["CX", "CZ", "SWAP", "CRY"]
    for _ in range(10):
        if rng.random() < 0.5:
            g = names1[rng.integers(len(names1))]
            params = (rng.uniform(0, 2 * math.pi),) if g.startswith("R") else ()
            t = [int(rng.integers(n))]
        else:
            g = names2[rng.integers(len(names2))]
            params = (rng.uniform(0, 2 * math.pi),) if g == "CRY" else ()
            t = [int(x) for x in rng.choice(n, 2, replace=False)]
        sv = qsim.sv_apply(sv, g, t, params)
        dense = _dense_gate(qsim.gate_matrix(g, params), t, n) @ dense
    assert np.max(np.abs(sv.probabilities() - np.abs(dense) ** 2)) <= 1e-8


def test_statevector_errors():
    with pytest.raises(NonUnitaryGate):
        qsim.sv_apply(StateVector(1), np.array([[1, 1], [0, 1]]), 0)
    with pytest.raises(IndexOutOfRange):
        qsim.sv_apply(StateVector(2), "H", 2)
    with pytest.raises(CapExceeded):
        StateVector(13)
    with pytest.raises(ShapeMismatch):
        StateVector(2, np.ones(3))


def test_projection_probability_and_branch():
    sv = qsim.sv_apply(StateVector(2), "H", 0)
    p, branch = qsim.sv_project(sv, 0, 1)
    assert p == pytest.approx(0.5)
    assert branch.probabilities() == pytest.approx([0, 0, 1, 0])
    assert qsim.sv_project(StateVector(1), 0, 1) == (0.0, None)


# ---------------------------------------------------------------- distances


def test_trace_distance_examples():
    assert qsim.trace_distance([0.3, 0.7], [0.3, 0.7]) == 0
    assert qsim.trace_distance([1, 0], [0, 1]) == 1
    assert qsim.trace_distance([0.5, 0.5], [0.4, 0.6]) == pytest.approx(0.1)
    assert qsim.trace_distance({"a": 1.0}, {"b": 1.0}) == 1
    with pytest.raises(ShapeMismatch):
        qsim.trace_distance([1, 0], [1, 0, 0])


def test_trace_distance_of_pure_states():
    rng = np.random.default_rng(8)
    for _ in range(20):
        a = rng.normal(size=4) + 1j * rng.normal(size=4)
        b = rng.normal(size=4) + 1j * rng.normal(size=4)
        a /= np.linalg.norm(a)
        b /= np.linalg.norm(b)
        want = math.sqrt(max(0.0, 1 - abs(np.vdot(a, b)) ** 2))
        got = qsim.trace_distance(np.outer(a, a.conj()), np.outer(b, b.conj()))
        assert got == pytest.approx(want, abs=1e-10)


@given(st.lists(st.floats(0.01, 1), min_size=2, max_size=8), st.integers(0, 1000))
def test_trace_distance_is_a_metric_on_distributions(w, seed):
    p = np.array(w) / np.sum(w)
    q = np.random.default_rng(seed).permutation(p)
    d = qsim.trace_distance(p, q)
    assert 0 <= d <= 1
    assert d == pytest.approx(qsim.trace_distance(q, p))


def test_partial_trace_of_product_state():
    a = np.array([1, 1j]) / math.sqrt(2)
    b = np.array([0.6, 0.8])
    rho = np.outer(np.kron(a, b), np.kron(a, b).conj())
    assert qsim.partial_trace(rho, 2, [0]) == pytest.approx(np.outer(a, a.conj()))
    assert qsim.partial_trace(rho, 2, [1]) == pytest.approx(np.outer(b, b))
