from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from qotlab import prg
from qotlab.equiv import (BOT, ConstantChallenger, EqCommitter, EquivEngine, FingerprintChallenger,
                          HonestScript, RandomMismatchScript, all_mismatched, classical_equivocator,
                          committed_value_oracle, eq_commit, eq_decommit, extractor_passthrough,
                          one_mismatched)
from qotlab.errors import ReceiverAbort, RetryBudgetExceeded
from qotlab.naor import NaorEngine


def _engine(lam, strict=True, transparent=False, challenger=None):
    return EquivEngine(NaorEngine(prg.stream_prg(32), transparent=transparent), lam,
                       challenger=challenger, strict=strict)


def sigma(p, n):
    return math.sqrt(p * (1 - p) / n)


# ---------------------------------------------------------------- commit and open


@given(st.integers(0, 1), st.integers(1, 6), st.integers(0, 2**32 - 1))
@settings(max_examples=25)
def test_honest_commit_never_aborts(b, lam, seed):
    eng = _engine(lam)
    run = eq_commit(eng, b, np.random.default_rng(seed))
    assert not run.receiver.aborted.any()
    assert run.receiver.e.shape == (lam, 1)
    ok, bits = eq_decommit(eng, run)
    assert ok.all() and bits.tolist() == [b]


def test_hint_is_b_xor_unopened_pair_bit():
    eng = _engine(4)
    run = eq_commit(eng, np.ones(50, np.uint8), np.random.default_rng(0))
    cm = run.committer
    lanes = np.arange(50)
    for i in range(4):
        unopened = cm.sess_bits[i, 2 * (1 - cm.c[i].astype(int)), lanes]
        assert np.array_equal(cm.e[i], 1 ^ unopened)
    # the hand example: b = 1, c = 0, d_{i,1} = 0 gives e = 1
    i, j = np.argwhere((cm.c == 0) & (cm.sess_bits[:, 2, :] == 0))[0]
    assert cm.e[i, j] == 1


@pytest.mark.parametrize("b", [0, 1])
def test_claiming_the_other_bit_is_rejected(b):
    eng = _engine(5)
    run = eq_commit(eng, np.full(40, b, np.uint8), np.random.default_rng(1))
    ok, _ = eq_decommit(eng, run, claim=np.full(40, 1 - b, np.uint8))
    assert not ok.any()
    # every one of the lambda checks fails
    assert (run.receiver.decommit["dhat"] != ((1 - b) ^ run.receiver.e)).all()


class _OneBadHint(HonestScript):
    name = "one-bad-hint"

    def hints(self, b, sess_bits, c):
        e = super().hints(b, sess_bits, c)
        e[0] ^= 1
        return e


def test_single_corrupted_opening_is_rejected():
    eng = _engine(4)
    run = eq_commit(eng, np.zeros(30, np.uint8), np.random.default_rng(2), script=_OneBadHint())
    ok, _ = eq_decommit(eng, run)
    assert not ok.any()


def test_all_mismatched_caught_before_decommit():
    eng = _engine(10, strict=False)
    run = eq_commit(eng, np.zeros(2000, np.uint8), np.random.default_rng(3), script=all_mismatched())
    assert run.receiver.aborted.mean() >= 1 - 2.0**-10
    assert (run.receiver.first_fail == 0).all()


def test_strict_engine_raises_with_iteration():
    eng = _engine(3, strict=True)
    with pytest.raises(ReceiverAbort) as e:
        eq_commit(eng, np.zeros(5, np.uint8), np.random.default_rng(4), script=all_mismatched())
    assert e.value.iteration == 0


@pytest.mark.parametrize("lam", [1, 2, 4])
def test_one_mismatched_pair_escapes_at_rate_two_to_minus_lambda(lam):
    eng = _engine(lam, strict=False)
    n = 4000
    run = eq_commit(eng, np.zeros(n, np.uint8), np.random.default_rng(lam),
                    script=RandomMismatchScript())
    esc = 1 - run.receiver.aborted.mean()
    p = 2.0**-lam
    assert abs(esc - p) <= 4 * sigma(p, n)


# ---------------------------------------------------------------- committed-value oracle


class _BitsBase:
    """Stand-in transparent base whose session state is the committed bit array itself."""

    def committed(self, s):
        return s


def _oracle_state(unopened, hints, c):
    lam = len(unopened)
    sessions = []
    for i in range(lam):
        other = 1 - c[i]
        bits = [np.array([0]), np.array([0]), np.array([1]), np.array([1])]
        bits[2 * other] = np.array([unopened[i]])
        bits[2 * other + 1] = np.array([unopened[i]])
        sessions.append(bits)
    return EqCommitter(None, None, sessions, np.array(c)[:, None], np.array(hints)[:, None], None)


def test_oracle_majority_of_hint_xors():
    eng = EquivEngine.__new__(EquivEngine)
    eng.base, eng.lam = _BitsBase(), 3
    state = _oracle_state([0, 1, 1], [1, 1, 0], [0, 1, 0])
    assert committed_value_oracle(eng, state) == 1


def test_oracle_on_real_runs():
    eng = _engine(5, strict=False, transparent=True)
    bits = np.random.default_rng(5).integers(0, 2, 60, dtype=np.uint8)
    run = eq_commit(eng, bits, np.random.default_rng(6))
    assert np.array_equal(eng.committed(run.committer), bits)
    bad = eq_commit(eng, np.zeros(20, np.uint8), np.random.default_rng(7), script=all_mismatched())
    assert (eng.committed(bad.committer) == BOT).all()
    one = eq_commit(eng, bits[:1], np.random.default_rng(8))
    assert committed_value_oracle(eng, one.committer) == int(bits[0])


# ---------------------------------------------------------------- equivocator


def test_equivocator_opens_both_ways():
    eng = _engine(4)
    ec = classical_equivocator(eng, 200, np.random.default_rng(9))
    assert not ec.receiver.aborted.any()
    for b in (0, 1):
        ok, bits = ec.open_to(b)
        assert ok.all() and (bits == b).all()


def test_equivocator_against_constant_and_fingerprint_challengers():
    for ch in (ConstantChallenger(0), FingerprintChallenger()):
        eng = _engine(3, challenger=ch)
        ec = classical_equivocator(eng, 100, np.random.default_rng(10))
        for b in (0, 1):
            ok, bits = ec.open_to(b)
            assert ok.all() and (bits == b).all()


def test_equivocator_retries_are_geometric_half():
    eng = _engine(10)
    ec = classical_equivocator(eng, 1000, np.random.default_rng(11))
    tries = ec.attempts.reshape(-1)  # 10^4 iterations
    kmax = 6
    obs = np.array([np.sum(tries == k) for k in range(1, kmax)] + [np.sum(tries >= kmax)])
    p = np.array([0.5**k for k in range(1, kmax)] + [0.5 ** (kmax - 1)])
    chi2, pval = stats.chisquare(obs, p * tries.size)
    assert pval > 0.01


def test_equivocator_zero_budget_raises():
    eng = _engine(2)
    with pytest.raises(RetryBudgetExceeded):
        classical_equivocator(eng, 5, np.random.default_rng(0), budget=0)


# ---------------------------------------------------------------- extraction


def test_extractor_passthrough_honest():
    eng = _engine(8)
    bits = np.random.default_rng(12).integers(0, 2, 500, dtype=np.uint8)
    ext, st, _ = extractor_passthrough(eng, bits, np.random.default_rng(13))
    assert np.array_equal(ext, bits)


def test_extractor_passthrough_single_iteration():
    eng = _engine(1)
    bits = np.random.default_rng(14).integers(0, 2, 100, dtype=np.uint8)
    ext, st, cm = extractor_passthrough(eng, bits, np.random.default_rng(15))
    lanes = np.arange(100)
    d_other = st.extracted[0, 1 - st.c[0].astype(int), lanes]
    assert np.array_equal(ext, st.e[0] ^ d_other)


def test_extractor_passthrough_mismatched_aborts():
    eng = _engine(10, strict=False)
    ext, st, _ = extractor_passthrough(eng, np.zeros(1000, np.uint8), np.random.default_rng(16),
                                       script=all_mismatched())
    assert st.aborted.mean() >= 1 - 2.0**-10


def test_one_mismatched_script_patterns():
    s = one_mismatched(1)
    assert s.pattern.tolist() == [0, 1]
