from __future__ import annotations

import math

import numpy as np
import pytest

from qotlab.errors import CommitterAbort, DomainTooLarge
from qotlab.extcom import (BiasedMeasure, CorruptBlocks, ExtcomEngine, ExtParams, FlipOneBit,
                           NonMeasuring, default_inner, ext_commit, ext_decommit, ext_extract,
                           hiding_probe, take)
from qotlab.hashing import lhl_bound
from qotlab.rng import LaneRng


def sigma(p, n):
    return math.sqrt(p * (1 - p) / n)


def _rngs(seed, lanes):
    return LaneRng.from_seed(seed, lanes, "c"), LaneRng.from_seed(seed, lanes, "r")


def test_params_presets_and_invariants():
    p = ExtParams.preset(4)
    assert (p.n_total, p.n_test, p.n_blocks, p.block_len, p.n_surv) == (128, 64, 4, 16, 64)
    assert (p.hash.input_len, p.hash.output_len) == (16, 1)
    m = ExtParams.micro(8)
    assert (m.n_total, m.n_test, m.block_len) == (8, 4, 4)
    with pytest.raises(ValueError):
        ExtParams(2, 10, 4, 2, 3)
    with pytest.raises(ValueError):
        ExtParams(2, 8, 4, 3, 2)


# ---------------------------------------------------------------- commit


def test_honest_preset_runs_never_abort():
    eng = ExtcomEngine(ExtParams.preset(4))
    bits = np.random.default_rng(0).integers(0, 2, 100, dtype=np.uint8)
    run = ext_commit(eng, bits, *_rngs(1, 100))
    chk = run.committer.check
    assert not chk.bad.any()
    assert run.committer.surv.shape == (100, 64)
    # block lines and masks
    assert np.array_equal(run.committer.d, eng._hash(run.committer.seeds, take(chk.x, chk.surv)))
    assert np.array_equal(run.committer.v, bits[:, None] ^ run.committer.d)
    assert np.array_equal(run.receiver.v, run.committer.v)


def test_mask_line_example():
    eng = ExtcomEngine(ExtParams.preset(2))
    run = ext_commit(eng, np.ones(200, np.uint8), *_rngs(2, 200))
    zero = run.committer.d == 0
    assert zero.any()
    assert (run.committer.v[zero] == 1).all()


def test_check_coverage_is_binomial_half():
    p = ExtParams.preset(4)
    eng = ExtcomEngine(p)
    run = ext_commit(eng, np.zeros(300, np.uint8), *_rngs(3, 300))
    checked = run.committer.check.checked
    mean, sd = p.n_test / 2, math.sqrt(p.n_test / 4)
    assert abs(checked.mean() - mean) <= 3 * sd / math.sqrt(checked.size)


@pytest.mark.parametrize("n_total", [4, 8])
def test_non_measuring_receiver_is_caught_at_analytic_rate(n_total):
    params = ExtParams.micro(n_total)
    eng = ExtcomEngine(params, default_inner(1, 32), strict=False, measure=NonMeasuring())
    n = 3000
    run = ext_commit(eng, np.zeros(n, np.uint8), *_rngs(4, n))
    caught = run.committer.check.bad.mean()
    oracle = 1 - 0.75**params.n_test
    assert abs(caught - oracle) <= 3 * sigma(oracle, n)


def test_partial_measurer_is_caught_at_its_rate():
    params = ExtParams.micro(8)
    eng = ExtcomEngine(params, default_inner(1, 32), strict=False, measure=BiasedMeasure(0.5))
    n = 3000
    run = ext_commit(eng, np.zeros(n, np.uint8), *_rngs(5, n))
    oracle = 1 - (1 - 0.5 * 0.25) ** params.n_test
    assert abs(run.committer.check.bad.mean() - oracle) <= 3 * sigma(oracle, n)


def test_strict_engine_aborts_the_commit():
    params = ExtParams.micro(8)
    eng = ExtcomEngine(params, default_inner(1, 32), strict=True, measure=NonMeasuring())
    with pytest.raises(CommitterAbort):
        for s in range(50):
            ext_commit(eng, np.zeros(8, np.uint8), *_rngs(s, 8))


# ---------------------------------------------------------------- decommit


@pytest.mark.parametrize("b", [0, 1])
def test_honest_round_trip(b):
    eng = ExtcomEngine(ExtParams.preset(3))
    run = ext_commit(eng, np.full(60, b, np.uint8), *_rngs(6 + b, 60))
    ok, bits = ext_decommit(eng, run)
    assert ok.all() and (bits == b).all()


def test_claiming_the_other_bit_breaks_every_line():
    eng = ExtcomEngine(ExtParams.preset(3))
    run = ext_commit(eng, np.zeros(40, np.uint8), *_rngs(8, 40))
    ok, _ = ext_decommit(eng, run, claim=np.ones(40, np.uint8))
    assert not ok.any()
    assert (run.receiver.decommit["first_bad_line"] == 0).all()


def test_flipped_block_bit_is_rejected_at_oracle_rate():
    eng = ExtcomEngine(ExtParams.preset(2))
    n = 2000
    run = ext_commit(eng, np.zeros(n, np.uint8), *_rngs(9, n), script=FlipOneBit())
    ok, _ = ext_decommit(eng, run)
    cm, rc = run.committer, run.receiver
    xs = take(cm.x, cm.surv).copy()
    xs[:, 0] ^= 1
    line_breaks = (eng._hash(cm.seeds, xs) != cm.d).any(axis=1)
    pos = cm.surv[:, 0]
    lanes = np.arange(n)
    basis_match = rc.check.theta_hat[lanes, pos] == cm.check.theta[lanes, pos]
    # rejected exactly when the hash line breaks or the receiver's basis matched there
    assert np.array_equal(~ok, line_breaks | basis_match)
    # per-index basis match is 1/2 and the flipped position sits in the hash with probability 1/2
    assert abs((~ok).mean() - 0.75) <= 3 * sigma(0.75, n)
    assert abs(basis_match.mean() - 0.5) <= 3 * sigma(0.5, n)


# ---------------------------------------------------------------- extraction


def test_extractor_recovers_honest_bit():
    eng = ExtcomEngine(ExtParams.preset(4))
    for j in range(5):
        bits = np.random.default_rng([10, j]).integers(0, 2, 100, dtype=np.uint8)
        r = ext_extract(eng, bits, *_rngs(11 + j, 100))
        assert r.accepted.all()
        assert np.array_equal(r.b_star, bits)
        assert np.array_equal(r.opened, bits)


def test_single_block_extraction_is_the_one_line():
    params = ExtParams.micro(8, n_blocks=1)
    eng = ExtcomEngine(params, default_inner(1, 32))
    bits = np.random.default_rng(12).integers(0, 2, 200, dtype=np.uint8)
    r = ext_extract(eng, bits, *_rngs(13, 200))
    st = r.receiver
    line = eng._hash(st.seeds, take(st.check.x_hat, st.check.surv))[:, 0] ^ st.v[:, 0]
    assert np.array_equal(r.b_star, line)
    assert np.array_equal(r.b_star, bits)


def test_even_block_tie_outputs_zero_with_flag():
    eng = ExtcomEngine(ExtParams.preset(2))
    bits = np.ones(300, np.uint8)
    r = ext_extract(eng, bits, *_rngs(14, 300), script=CorruptBlocks(1))
    tie = np.array(r.report.tie)
    assert tie.all()
    assert (r.b_star[tie] == 0).all()
    assert r.report.to_json().startswith("{")


def test_corrupted_blocks_extraction_failure_bounded():
    lam = 4
    eng = ExtcomEngine(ExtParams.preset(lam))
    bits = np.random.default_rng(15).integers(0, 2, 200, dtype=np.uint8)
    r = ext_extract(eng, bits, *_rngs(16, 200), script=CorruptBlocks(2))
    bad = (r.accepted & (r.b_star != r.opened)).mean()
    bound = 2.0 ** (-lam / 2)
    assert bad <= bound + 4 * sigma(bound, 200)


# ---------------------------------------------------------------- hiding


def test_exhaustive_probe_within_leftover_hash_bound():
    p = hiding_probe(ExtParams.micro(8), "honest")
    assert p.mode == "exhaustive"
    assert p.distance <= p.bound
    assert p.bound == min(1.0, lhl_bound(p.min_entropy, 1))
    # each of the 4 block bits is known with probability 1/2 and fixes its seed position;
    # the hash is fixed when every seed-1 position is known: ((1 + 1/2) / 2)^4
    assert p.distance == pytest.approx(0.75**4)


def test_clairvoyant_probe_detects_full_information():
    p = hiding_probe(ExtParams.micro(8), "clairvoyant")
    assert p.distance == 1.0
    assert not p.within_bound
    s = hiding_probe(ExtParams.micro(8), "clairvoyant", trials=200, rng=np.random.default_rng(0))
    assert s.distance == 1.0


def test_sampled_probes_report():
    rng = np.random.default_rng(17)
    hon = hiding_probe(ExtParams.micro(8), "honest", trials=2000, rng=rng)
    assert abs(hon.distance - 0.75**4) <= 4 * hon.sigma
    nm = hiding_probe(ExtParams.micro(8), "non-measuring", trials=500, rng=rng)
    assert nm.as_dict()["within_bound"] is nm.within_bound
    with pytest.raises(DomainTooLarge):
        hiding_probe(ExtParams.preset(4), "honest")
