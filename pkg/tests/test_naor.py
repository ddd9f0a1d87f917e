from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qotlab import naor, prg
from qotlab.engine import sel_all
from qotlab.errors import DomainTooLarge, LengthMismatch, OpaqueEngine
from qotlab.naor import NaorEngine
from qotlab.rng import LaneRng
from qotlab.transport import Transcript, run_pair


def test_first_message_reproducible_and_sized():
    g = prg.stream_prg(16)
    a = naor.naor_first(np.random.default_rng(5), g)
    assert np.array_equal(a, naor.naor_first(np.random.default_rng(5), g))
    assert a.size == 48
    diffs = sum(not np.array_equal(naor.naor_first(np.random.default_rng(k), g),
                                   naor.naor_first(np.random.default_rng(k + 1000), g))
                for k in range(200))
    assert diffs == 200


def test_commit_zero_is_the_generator_output():
    g = prg.stream_prg(32)
    rng = np.random.default_rng(0)
    seed = rng.integers(0, 2, 32, dtype=np.uint8)
    u = naor.naor_first(rng, g)
    assert np.array_equal(naor.naor_commit(g, u, 0, seed), g(seed)[0])


def test_toy_generator_hand_example():
    g = prg.repeat_prg(2)
    c = naor.naor_commit(g, "101100", 1, "10")
    assert "".join(map(str, c)) == "000110"


def test_commit_is_deterministic():
    g = prg.stream_prg(16)
    seed = np.arange(16) % 2
    u = np.ones(48, np.uint8)
    assert np.array_equal(naor.naor_commit(g, u, 1, seed), naor.naor_commit(g, u, 1, seed))


def test_length_mismatch():
    with pytest.raises(LengthMismatch):
        naor.naor_commit(prg.repeat_prg(2), "1011", 1, "10")


@given(st.integers(0, 2**32 - 1), st.integers(0, 1))
def test_verify_roundtrip_and_rejections(seed_int, b):
    g = prg.stream_prg(24)
    rng = np.random.default_rng(seed_int)
    seed = rng.integers(0, 2, 24, dtype=np.uint8)
    u = naor.naor_first(rng, g)
    c = naor.naor_commit(g, u, b, seed)
    assert naor.naor_verify(g, u, c, (seed, b)) == (True, b)
    if u.any():
        assert naor.naor_verify(g, u, c, (seed, 1 - b)) == (False, None)
    bad = c.copy()
    bad[int(rng.integers(48))] ^= 1
    assert naor.naor_verify(g, u, bad, (seed, b)) == (False, None)
    assert naor.naor_verify(g, u, c, (seed[:-1], b)) == (False, None)


# ---------------------------------------------------------------- binding audit


def _audit_reference(g):
    """Second enumeration: loop over all seed pairs with Python ints."""
    s = g.seed_len
    outs = {}
    for seed in itertools.product((0, 1), repeat=s):
        outs[seed] = int("".join(map(str, g(np.array(seed))[0])), 2)
    return len({outs[a] ^ outs[b] for a in outs for b in outs})


def test_repeat_generator_bad_u_are_triplicated_strings():
    audit = naor.binding_audit(prg.repeat_prg(2))
    assert audit.bad_u_count == 4 and audit.total_u == 64
    assert audit.fraction == 4 / 64
    for u, s0, s1 in audit.examples:
        d = u[:2]
        assert u == d * 3
        assert int(s0, 2) ^ int(s1, 2) == int(d, 2)


@pytest.mark.parametrize("s", [2, 3, 4])
def test_injective_generator_within_counting_bound(s):
    audit = naor.binding_audit(prg.random_injective_prg(s, seed=s))
    assert audit.fraction <= 2.0**-s


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_random_function_audit_matches_second_enumeration(seed):
    g = prg.random_function_prg(3, seed)
    assert naor.binding_audit(g).bad_u_count == _audit_reference(g)


def test_audit_refuses_secure_and_large_generators():
    with pytest.raises(ValueError):
        naor.binding_audit(prg.stream_prg(8))
    with pytest.raises(DomainTooLarge):
        naor.binding_audit(prg.repeat_prg(naor.AUDIT_MAX_SEED + 1))


# ---------------------------------------------------------------- batched engine


def _commit_open(engine, bits, seed=0, claim=None):
    L = bits.size
    crng = LaneRng.from_seed(seed, L, "c")
    rrng = LaneRng.from_seed(seed, L, "r")
    t = Transcript()
    oc, orr = run_pair(engine.commit_c(bits, crng), engine.commit_r(L, rrng), t)
    assert oc.ok and orr.ok
    _, opened = run_pair(engine.open_c([oc.value], sel_all(L), claim=claim),
                         engine.open_r([orr.value], np.ones((L, 1), bool)), t)
    return oc.value, orr.value, opened.value, t


@pytest.mark.parametrize("seed_len", [8, 13, 128])
def test_engine_honest_roundtrip(seed_len):
    bits = np.random.default_rng(seed_len).integers(0, 2, 50, dtype=np.uint8)
    eng = NaorEngine(prg.stream_prg(seed_len))
    _, _, (sel, opened, ok), _ = _commit_open(eng, bits)
    assert ok.all() and np.array_equal(opened, bits)


def test_engine_matches_scalar_functions():
    g = prg.stream_prg(16)
    eng = NaorEngine(g)
    bits = np.array([0, 1, 1, 0], np.uint8)
    cst, rst, _, _ = _commit_open(eng, bits)
    for j in range(4):
        u = np.unpackbits(rst.u[j])[:48]
        seed = np.unpackbits(cst.seeds[j])[:16]
        c = np.unpackbits(rst.c[j])[:48]
        assert naor.naor_verify(g, u, c, (seed, bits[j])) == (True, int(bits[j]))


def test_engine_rejects_false_claims():
    eng = NaorEngine(prg.stream_prg(16))
    bits = np.zeros(40, np.uint8)
    _, _, (_, opened, ok), _ = _commit_open(eng, bits, claim=np.ones(40, np.uint8))
    assert not ok.any()


def test_engine_extracts_with_keystream_model():
    eng = NaorEngine(prg.stream_prg(16))
    L = 30
    bits = np.random.default_rng(3).integers(0, 2, L, dtype=np.uint8)
    crng = LaneRng.from_seed(1, L, "c")
    model = LaneRng.from_seed(1, L, "c")
    oc, orr = run_pair(eng.commit_c(bits, crng), eng.extract_r(L, LaneRng.from_seed(1, L, "r"), model=model))
    _, got = orr.value
    assert np.array_equal(got, bits)


def test_transparent_mode_gate():
    eng = NaorEngine(prg.stream_prg(8))
    cst, _, _, _ = _commit_open(eng, np.array([1, 0], np.uint8))
    with pytest.raises(OpaqueEngine):
        eng.committed(cst)
    assert NaorEngine(prg.stream_prg(8), transparent=True).committed(cst).tolist() == [1, 0]


def test_transcripts_reproducible():
    eng = NaorEngine(prg.stream_prg(16))
    bits = np.array([1, 0, 1], np.uint8)
    a = _commit_open(eng, bits, seed=9)[3].to_jsonl()
    b = _commit_open(eng, bits, seed=9)[3].to_jsonl()
    c = _commit_open(eng, bits, seed=10)[3].to_jsonl()
    assert a == b != c
