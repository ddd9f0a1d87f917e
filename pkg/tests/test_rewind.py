from __future__ import annotations

import json
import math

import numpy as np
import pytest

from qotlab.errors import CapExceeded, HypothesisViolated, ZeroSuccessProbability
from qotlab.qsim import partial_trace
from qotlab.rewind import (Gate, GeneralCircuit, Rewinder, RewindParams, build_rewinder,
                           check_hypotheses, coin_circuit, default_corpus, dense_conditional,
                           estimate_p, haar_state, ideal_conditional, load_corpus, probe_inputs,
                           rewind_lab, success_probability, verify_bound)


def _input_density(psi):
    return np.outer(psi, np.conj(psi))


def _random_circuit(rng, n_inputs=2, depth=10):
    n = n_inputs + 1
    names = ["H", "S", "T", "X", "RX", "RY", "RZ", "CX", "CZ", "CRY", "SWAP"]
    gates = []
    for _ in range(depth):
        name = names[rng.integers(len(names))]
        k = 2 if name in ("CX", "CZ", "CRY", "SWAP") else 1
        targets = tuple(int(t) for t in rng.choice(n, k, replace=False))
        params = (float(rng.uniform(0, 2 * math.pi)),) if name.startswith(("R", "CR")) else ()
        gates.append(Gate(name, targets, params))
    return GeneralCircuit(n_inputs, 1, gates, int(rng.integers(n)))


# ---------------------------------------------------------------- circuits


def test_fresh_ancilla_leaves_input_untouched():
    c = GeneralCircuit(2, 1, [], output_qubit=2)
    psi = haar_state(4, np.random.default_rng(0))
    assert success_probability(c, psi) == pytest.approx(1.0)
    rho = ideal_conditional(c, psi)
    assert np.allclose(rho, _input_density(psi))


def test_hadamard_ancilla_is_a_fair_coin():
    c = GeneralCircuit(2, 1, [Gate("H", (2,))], output_qubit=2)
    psi = haar_state(4, np.random.default_rng(1))
    assert success_probability(c, psi) == pytest.approx(0.5)
    assert np.allclose(ideal_conditional(c, psi), _input_density(psi))
    ps = estimate_p(c, probe_inputs(c, 4))[1]
    assert np.allclose(ps, 0.5)


@pytest.mark.parametrize("seed", range(8))
def test_conditional_matches_dense_oracle(seed):
    rng = np.random.default_rng(seed)
    c = _random_circuit(rng)
    psi = haar_state(4, rng)
    if success_probability(c, psi) < 1e-9:
        pytest.skip("b = 0 unreachable for this draw")
    assert np.abs(ideal_conditional(c, psi) - dense_conditional(c, psi)).max() <= 1e-8


def test_corpus_conditionals_match_dense_oracle():
    rng = np.random.default_rng(2)
    for c in default_corpus(5, seed=3):
        for psi in probe_inputs(c, 2, rng):
            assert np.abs(ideal_conditional(c, psi) - dense_conditional(c, psi)).max() <= 1e-8


@pytest.mark.parametrize("phi", [0.3, 1.0, 2.2, math.pi / 2])
def test_rotated_ancilla_probability(phi):
    c = GeneralCircuit(1, 1, [Gate("RY", (1,), (phi,))], output_qubit=1)
    for psi in probe_inputs(c, 3):
        assert abs(success_probability(c, psi) - math.cos(phi / 2) ** 2) <= 1e-12


def test_measuring_an_input_qubit():
    c = GeneralCircuit(2, 0, [], output_qubit=0)
    assert success_probability(c, [1, 0, 0, 0]) == pytest.approx(1.0)
    assert success_probability(c, [0, 0, 1, 0]) == pytest.approx(0.0)
    with pytest.raises(ZeroSuccessProbability):
        ideal_conditional(c, [0, 0, 1, 0])


def test_circuit_validation():
    with pytest.raises(CapExceeded):
        GeneralCircuit(11, 0, [], 0)
    with pytest.raises(ValueError):
        GeneralCircuit(1, 1, [Gate("H", (2,))], 1)
    with pytest.raises(ValueError):
        GeneralCircuit(1, 1, [], 5)
    with pytest.raises(ValueError):
        GeneralCircuit(1, 1, [], 1).embed([1, 0, 0, 0])


def test_json_round_trip(tmp_path):
    c = coin_circuit(3, 0.5, 10, np.random.default_rng(4))
    d = c.to_json()
    back = GeneralCircuit.from_json(json.loads(json.dumps(d)))
    assert back.to_json() == d
    path = tmp_path / "corpus.json"
    path.write_text(json.dumps([d, d]))
    loaded = load_corpus(str(path))
    psi = haar_state(8, np.random.default_rng(5))
    assert np.allclose(ideal_conditional(loaded[1], psi), ideal_conditional(c, psi))


# ---------------------------------------------------------------- parameters and hypotheses


def test_iteration_count_and_bound():
    p = RewindParams(0.5, 0.5, 0.01)
    assert p.iterations() == math.ceil(math.log2(100))
    assert p.bound() == pytest.approx(4 * 0.1 * math.log2(100) / 0.25)
    assert p.bound() > 1


@pytest.mark.parametrize("params,ps,which", [
    (RewindParams(0.5, 0.5, 0.0), [0.5], "eps"),
    (RewindParams(0.0, 0.5, 0.1), [0.5], "p0"),
    (RewindParams(0.5, 0.3, 0.5), [0.5], "p0-vs-q"),
    (RewindParams(0.45, 0.5, 0.01), [0.45], "closeness"),
    (RewindParams(0.5, 0.5, 0.01), [0.499], "lower"),
])
def test_hypothesis_violations_are_named(params, ps, which):
    with pytest.raises(HypothesisViolated) as e:
        check_hypotheses(params, ps)
    assert e.value.which == which


def test_build_rewinder_checks_probes():
    c = coin_circuit(2, 0.7, 6, np.random.default_rng(6))
    with pytest.raises(HypothesisViolated):
        build_rewinder(c, 0.5, 0.5, 0.01)
    rw = build_rewinder(coin_circuit(2, 0.5, 6, np.random.default_rng(6)), 0.5, 0.5, 0.01)
    assert rw.iterations == RewindParams(0.5, 0.5, 0.01).iterations()


# ---------------------------------------------------------------- rewinder


def test_outputs_have_unit_trace_and_monotone_distance():
    c = coin_circuit(3, 0.5, 12, np.random.default_rng(7))
    params = RewindParams(0.5, 0.5, 1e-4)
    rep = verify_bound(c, probe_inputs(c, 3), params)
    assert rep.max_trace_error <= 1e-9
    assert rep.trend_ok
    assert all(b <= a + 1e-12 for a, b in zip(rep.td_trend, rep.td_trend[1:]))
    assert rep.td_trend[-1] < rep.td_trend[0]


def test_exact_half_converges_toward_zero():
    c = coin_circuit(2, 0.5, 8, np.random.default_rng(8))
    rw = Rewinder(c, 20)
    psi = haar_state(4, np.random.default_rng(9))
    ideal = ideal_conditional(c, psi)
    tds = [0.5 * np.abs(np.linalg.eigvalsh(ideal - o)).sum() for o in rw.outputs(psi)]
    assert tds[-1] <= 1e-5
    # one attempt keeps the b = 1 branch: distance (1 - p) * TD(rho_0, rho_1)
    flipped = GeneralCircuit(c.n_inputs, c.n_ancillas, c.gates + [Gate("X", (c.output_qubit,))],
                             c.output_qubit)
    rho1 = ideal_conditional(flipped, psi)
    assert tds[0] == pytest.approx(0.5 * 0.5 * np.abs(np.linalg.eigvalsh(ideal - rho1)).sum(), abs=1e-9)


def test_constant_zero_outcome_needs_one_attempt():
    c = GeneralCircuit(2, 1, [Gate("H", (0,)), Gate("CX", (0, 1))], output_qubit=2)
    psi = haar_state(4, np.random.default_rng(10))
    out = Rewinder(c, 1).run(psi)
    full = c.forward(c.embed(psi)).amplitudes
    assert np.allclose(out, partial_trace(np.outer(full, full.conj()), 3, c.residual))
    rep = verify_bound(c, probe_inputs(c, 2), RewindParams(0.5, 0.5, 0.01))
    assert rep.iterations == 1 and rep.td_measured <= 1e-12 and rep.passed
    assert rewind_lab([c], eps=0.01)[0].passed


def test_non_vacuous_bound_holds_at_small_eps():
    c = coin_circuit(3, 0.5, 12, np.random.default_rng(11))
    rep = verify_bound(c, probe_inputs(c, 2), RewindParams(0.5, 0.5, 1e-6))
    assert rep.td_bound < 1 and not rep.vacuous
    assert rep.passed and rep.status == "pass"
    assert rep.td_measured <= rep.td_bound


def test_report_status_and_json():
    c = coin_circuit(3, 0.5, 12, np.random.default_rng(12))
    rep = verify_bound(c, probe_inputs(c, 2), RewindParams(0.5, 0.5, 0.01))
    assert rep.vacuous and rep.status == "vacuous-pass"
    d = json.loads(json.dumps(rep.as_dict()))
    assert d["status"] == "vacuous-pass" and d["iterations"] == rep.iterations


def test_lab_on_corpus_never_violates_the_bound():
    reps = rewind_lab(default_corpus(6, seed=13), eps=0.01)
    assert len(reps) == 6
    for r in reps:
        assert r.passed and r.td_measured <= min(1.0, r.td_bound)
        assert r.max_trace_error <= 1e-9
