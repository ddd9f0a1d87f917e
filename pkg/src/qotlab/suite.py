"""The ten acceptance experiments, each returning a ``CriterionResult``."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import hashing, rewind, sampling
from . import transport as tp
from .equiv import (EquivEngine, EqReceiver, all_mismatched, classical_equivocator, eq_commit,
                    eq_decommit, one_mismatched)
from .extcom import CorruptBlocks, ExtcomEngine, ExtParams, ext_extract
from .naor import NaorEngine
from .prg import stream_prg
from .qot import (HonestReceiver, IdealOT, NonMeasuringReceiver, QotParams, qot_run,
                  sim_receiver)
from .rng import LaneRng, derive_seed


@dataclass
class Check:
    """One compared quantity; ``kind`` says how ``measured`` relates to ``bound``."""

    name: str
    measured: float
    bound: float
    formula: str
    kind: str = "le"  # le: measured <= bound; ge: measured >= bound; near: |measured-bound| <= tol
    tol: float = 0.0
    sigma: float = 0.0

    @property
    def passed(self) -> bool:
        if self.kind == "le":
            return self.measured <= self.bound + self.tol
        if self.kind == "ge":
            return self.measured >= self.bound - self.tol
        return abs(self.measured - self.bound) <= self.tol

    @property
    def vacuous(self) -> bool:
        return self.kind == "le" and self.bound >= 1.0

    @property
    def status(self) -> str:
        if not self.passed:
            return "fail"
        return "vacuous-pass" if self.vacuous else "pass"

    def as_dict(self) -> dict:
        return {"name": self.name, "measured": self.measured, "bound": self.bound,
                "kind": self.kind, "tol": self.tol, "sigma": self.sigma,
                "status": self.status, "formula": self.formula}


@dataclass
class CriterionResult:
    number: int
    title: str
    checks: list
    details: dict = field(default_factory=dict)
    seed: int = 0
    elapsed: float = 0.0
    limit: float | None = None

    @property
    def within_time(self) -> bool:
        return self.limit is None or self.elapsed < self.limit

    @property
    def passed(self) -> bool:
        return self.within_time and all(c.passed for c in self.checks)

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        t = f"{self.elapsed:.1f}s" + (f" (limit {self.limit:.0f}s)" if self.limit else "")
        return f"[{mark}] criterion {self.number}: {self.title} ({t})"

    def as_dict(self, timing: bool = False) -> dict:
        d = {"criterion": self.number, "title": self.title, "passed": self.passed,
             "seed": self.seed, "limit_s": self.limit,
             "checks": [c.as_dict() for c in self.checks], "details": self.details}
        if timing:
            d["timing"] = {"elapsed_s": self.elapsed, "within_time": self.within_time}
        return d


def _sigma(p: float, n: int) -> float:
    return math.sqrt(max(p * (1 - p), 0.0) / n) if n else 0.0


def _tv(a: np.ndarray, b: np.ndarray, cells: int) -> float:
    pa = np.bincount(a, minlength=cells) / a.size
    pb = np.bincount(b, minlength=cells) / b.size
    return float(0.5 * np.abs(pa - pb).sum())


# --------------------------------------------------------------------------
# oracles


def skip_abort_oracle(lam: int, survive_per_checked: float) -> float:
    """Sum over K ~ Bin(8 lam, 1/2) of Pr[K] (1 - c^K), computed exactly."""
    n = 8 * lam
    K = np.arange(n + 1)
    pk = stats.binom(n, 0.5).pmf(K)
    return float(np.sum(pk * (1 - survive_per_checked ** K)))


def survivor_disagreement_tail(lam: int) -> float:
    return sampling.disagreement_tail(lam)


def b1_extraction_failure(lam: int) -> float:
    """Honest receiver with b = 1: |S| counts survivor disagreements, so extraction
    fails when Bin(8 lam, 1/2) < 3 lam / 2."""
    n = 8 * lam
    k = np.arange(n + 1)
    return float(stats.binom(n, 0.5).pmf(k)[k < 1.5 * lam].sum())


# --------------------------------------------------------------------------
# criteria


def criterion_1(seed: int, runs: int = 200, lam: int = 8) -> CriterionResult:
    params = QotParams(lam)
    ok = 0
    for s in range(runs):
        g = np.random.default_rng([seed, s])
        m = g.integers(0, 2, (2, lam), dtype=np.uint8)
        b = int(g.integers(2))
        r = qot_run(params, m[0], m[1], b, seed=derive_seed(seed, "run", s), record=False)
        ok += int(r.ok and np.array_equal(r.receiver.output[0], m[b]))
    rate = ok / runs
    return CriterionResult(1, "QOT correctness (honest parties)", [
        Check("recovered m_b", rate, 1.0, "fraction of runs where the receiver outputs m_b == 1", "ge")],
        {"runs": runs, "lambda": lam, "stack": "cheap (equiv over naor; not extractable against quantum committers)"},
        limit=10.0)


def criterion_2(seed: int, runs: int = 10_000, lam: int = 8, batch: int = 250) -> CriterionResult:
    params = QotParams(lam)
    aborts = 0
    done = 0
    k = 0
    while done < runs:
        L = min(batch, runs - done)
        g = np.random.default_rng([seed, k])
        m = g.integers(0, 2, (L, lam), dtype=np.uint8)
        b = g.integers(0, 2, L, dtype=np.uint8)
        r = qot_run(params, m, m, b, seed=derive_seed(seed, "batch", k),
                    strategy=NonMeasuringReceiver(), strict=False, record=False)
        aborts += int(r.sender.aborted.sum())
        done += L
        k += 1
    freq = aborts / runs
    literal = skip_abort_oracle(lam, 0.75)
    per_index = skip_abort_oracle(lam, 0.5)
    s_lit = _sigma(literal, runs)
    s_idx = _sigma(per_index, runs)
    return CriterionResult(2, "Skipped-measurement detection", [
        Check("abort vs mixture with (3/4)^K", freq, literal,
              "|freq - sum_K Bin(8L,1/2)(K) (1 - (3/4)^K)| <= 3 sigma", "near", 3 * s_lit, s_lit),
        Check("abort vs mixture with (1/2)^K", freq, per_index,
              "|freq - sum_K Bin(8L,1/2)(K) (1 - (1/2)^K)| <= 3 sigma (= 1 - (3/4)^(8L))",
              "near", 3 * s_idx, s_idx)],
        {"runs": runs, "aborts": aborts, "lambda": lam,
         "oracle_literal": literal, "oracle_per_index": per_index,
         "closed_form_per_index": 1 - 0.75 ** (8 * lam)},
        limit=60.0)


def criterion_3(seed: int, runs: int = 10_000, lam: int = 10) -> CriterionResult:
    eng = EquivEngine(NaorEngine(), lam, strict=False)
    r = eq_commit(eng, np.zeros(runs, np.uint8), np.random.default_rng(seed), script=all_mismatched())
    caught = float(r.receiver.aborted.mean())
    bound = 1 - 2.0**-lam
    sig = _sigma(bound, runs)
    # one mismatched pair per iteration escapes with probability exactly 2^-lambda
    r1 = eq_commit(eng, np.zeros(runs, np.uint8), np.random.default_rng([seed, 1]), script=one_mismatched())
    caught1 = float(r1.receiver.aborted.mean())
    return CriterionResult(3, "Equivocal-compiler binding", [
        Check("caught rate floor", caught, 0.999, "caught >= 0.999", "ge"),
        Check("caught vs 1 - 2^-lambda", caught, bound, "caught >= 1 - 2^-lambda - 4 sigma", "ge", 4 * sig, sig),
        Check("one mismatched pair vs 1 - 2^-lambda", caught1, bound,
              "|caught - (1 - 2^-lambda)| <= 4 sigma", "near", 4 * sig, sig)],
        {"runs": runs, "lambda": lam, "caught": caught, "caught_one_mismatched": caught1})


def _eq_features(rec: EqReceiver) -> np.ndarray:
    c = rec.c.astype(np.int64)
    u = rec.opened[:, 0].astype(np.int64)
    v = rec.opened[:, 1].astype(np.int64)
    e = rec.e.astype(np.int64)
    a = rec.decommit["alpha"].astype(np.int64)
    d = rec.decommit["dhat"].astype(np.int64)
    return (((((c * 2 + u) * 2 + v) * 2 + e) * 2 + a) * 2 + d).ravel()


def criterion_4(seed: int, samples: int = 10_000, lam: int = 8, seed_len: int = 128) -> CriterionResult:
    checks = []
    details = {"samples": samples, "lambda": lam, "features": "per iteration (c, u, v, e, alpha, d_hat), pooled"}
    eng = EquivEngine(NaorEngine(stream_prg(seed_len)), lam)
    ec = classical_equivocator(eng, samples, np.random.default_rng([seed, 0]))
    for b in (0, 1):
        real = eq_commit(eng, np.full(samples, b, np.uint8), np.random.default_rng([seed, 1, b]))
        ok_r, _ = eq_decommit(eng, real)
        ok_e, bits = ec.open_to(b)
        tv = _tv(_eq_features(real.receiver), _eq_features(ec.last_receiver), 64)
        checks.append(Check(f"TV real vs equivocated, b={b}", tv, 0.05, "TV(features) <= 0.05"))
        checks.append(Check(f"open_to({b}) success", float((ok_e & (bits == b)).mean()), 1.0,
                            "fraction of lanes opened to b == 1", "ge"))
        details[f"real_open_ok_b{b}"] = float(ok_r.mean())
    details["attempts_mean"] = float(ec.attempts.mean())
    return CriterionResult(4, "Classical equivocation", checks, details)


def criterion_5(seed: int, runs: int = 500, lams=(4, 8), batch: int = 50) -> CriterionResult:
    checks = []
    details = {}
    for lam in lams:
        eng = ExtcomEngine(ExtParams.preset(lam))
        bound = 2.0 ** (-lam / 2)
        sig = _sigma(bound, runs)
        for label, k in (("honest", 0), (f"{math.ceil(lam / 2)}-corrupted", math.ceil(lam / 2))):
            bad = acc = 0
            for j in range(0, runs, batch):
                L = min(batch, runs - j)
                bits = np.random.default_rng([seed, lam, k, j]).integers(0, 2, L, dtype=np.uint8)
                r = ext_extract(eng, bits, LaneRng.from_seed(seed, L, "c", lam, k, j),
                                LaneRng.from_seed(seed, L, "r", lam, k, j),
                                script=CorruptBlocks(k) if k else None)
                bad += int((r.accepted & (r.b_star != r.opened)).sum())
                acc += int(r.accepted.sum())
            rate = bad / runs
            checks.append(Check(f"lambda={lam} {label}", rate, bound,
                                "Pr[accept and extracted != opened] <= 2^(-lambda/2) + 4 sigma",
                                "le", 4 * sig, sig))
            details[f"lambda={lam} {label}"] = {"accepted": acc / runs, "bad": rate}
    return CriterionResult(5, "Extractor agreement", checks, details)


def criterion_6(seed: int, n: int = 10, ell: int = 2, h_values=(2, 6, 10)) -> CriterionResult:
    params = hashing.HashParams(n, ell)
    checks = []
    for h in h_values:
        dist = hashing.flat_distribution(n, h, np.random.default_rng([seed, h]))
        d = hashing.lhl_empirical(params, dist)
        checks.append(Check(f"H_inf={h}", d, hashing.lhl_bound(h, ell),
                            "SD((s, h(s,X)), (s, U)) <= 2^-(1 + (H_inf - ell)/2)"))
    return CriterionResult(6, "Leftover hash (exhaustive)", checks, {"input_len": n, "ell": ell},
                           limit=5.0)


def criterion_7(seed: int, n: int = 5000, deltas=(0.25, 0.3), trials: int = 100_000) -> CriterionResult:
    checks = []
    details = {"n": n, "trials": trials, "method": "hypergeometric/binomial sampler (same law as direct)"}
    for bc in sampling.classical_lab(n, deltas, trials, seed):
        checks.append(Check(bc.name, bc.measured, min(1.0, bc.bound), bc.formula, "le",
                            4 * bc.sigma, bc.sigma))
        details[bc.name] = {"exact": bc.exact}
    # the fast sampler against the direct procedure at a shape where both are cheap
    strat = sampling.scripted_family()[3]
    n_small, d_small, t_small = 40, 0.25, 20_000
    w = int(strat.string(n_small, d_small).sum())
    exact = sampling.classical_error_exact(w, n_small, d_small)
    direct = sampling.classical_sampling_error(n_small, d_small, strat, t_small,
                                               np.random.default_rng([seed, 1]), method="direct")
    sig = _sigma(exact, t_small)
    checks.append(Check("direct sampler vs exact (n=40)", direct, exact,
                        "|direct - exact| <= 4 sigma", "near", 4 * sig, sig))
    return CriterionResult(7, "Classical sampling bound", checks, details, limit=60.0)


def criterion_8(seed: int, lam: int = 8, mc_trials: int = 100_000, sim_runs: int = 2000,
                batch: int = 250) -> CriterionResult:
    tail = survivor_disagreement_tail(lam)
    freq = sampling.hoeffding_check(lam, mc_trials, np.random.default_rng(seed))
    sig = _sigma(tail, mc_trials)
    params = QotParams(lam)
    hits = 0
    consistent = 0
    k = 0
    done = 0
    while done < sim_runs:
        L = min(batch, sim_runs - done)
        g = np.random.default_rng([seed, 8, k])
        m0 = g.integers(0, 2, (L, lam), dtype=np.uint8)
        m1 = g.integers(0, 2, (L, lam), dtype=np.uint8)
        b = g.integers(0, 2, L, dtype=np.uint8)
        res = sim_receiver(params, HonestReceiver(), IdealOT(), b, m0, m1,
                           seed=derive_seed(seed, "sim", k))
        hits += int((res.extracted_b == b).sum())
        # |S| lands at or above the threshold exactly when the receiver chose 1
        consistent += int(((res.s_size >= params.threshold) == (b == 1)).sum())
        done += L
        k += 1
    rate = hits / sim_runs
    floor = 1 - tail
    sig2 = _sigma(floor, sim_runs)
    return CriterionResult(8, "Basis-disagreement tail and receiver-bit extraction", [
        Check("Monte Carlo vs exact tail", freq, tail,
              "|freq - Pr[Bin(8L,1/2) <= 3L]| <= 4 sigma", "near", 4 * sig, sig),
        Check("sim_receiver extraction", rate, floor,
              "extracted == b in >= 1 - Pr[Bin(8L,1/2) <= 3L] - 4 sigma", "ge", 4 * sig2, sig2)],
        {"lambda": lam, "tail": tail, "b1_failure_exact": b1_extraction_failure(lam),
         "sim_runs": sim_runs, "threshold_consistent": consistent / sim_runs})


def criterion_9(seed: int, count: int = 20, eps: float = 0.01) -> CriterionResult:
    corpus = rewind.default_corpus(count, 4, 0.5, eps, seed=seed)
    reports = rewind.rewind_lab(corpus, eps, 0.5, seed=seed)
    rng = np.random.default_rng([seed, 9])
    dense_err = 0.0
    for c in corpus:
        for psi in rewind.probe_inputs(c, 2, rng):
            dense_err = max(dense_err, float(np.abs(rewind.ideal_conditional(c, psi)
                                                    - rewind.dense_conditional(c, psi)).max()))
    worst_margin = max(r.td_measured - min(1.0, r.td_bound) for r in reports)
    return CriterionResult(9, "Rewinding bound", [
        Check("td within bound (worst margin)", worst_margin, 0.0,
              "td_measured - min(1, 4 sqrt(eps) log2(1/eps) / (p0 (1 - p0))) <= 0"),
        Check("non-increasing trend", float(sum(not r.trend_ok for r in reports)), 0.0,
              "count of reports whose td trend increases == 0"),
        Check("statevector vs dense oracle", dense_err, 1e-8, "max |rho_sv - rho_dense| <= 1e-8"),
        Check("trace preserved", max(r.max_trace_error for r in reports), 1e-9, "|tr rho - 1| <= 1e-9")],
        {"statuses": [r.status for r in reports], "eps": eps,
         "iterations": reports[0].iterations if reports else 0},
        limit=120.0)


def criterion_10(seed: int, lam: int = 4) -> CriterionResult:
    params = QotParams(lam)
    g = np.random.default_rng(seed)
    m = g.integers(0, 2, (2, lam), dtype=np.uint8)
    b = int(g.integers(2))
    a = qot_run(params, m[0], m[1], b, seed=seed, transport="inproc")
    t = qot_run(params, m[0], m[1], b, seed=seed, transport="tcp")
    same = a.transcript.to_jsonl() == t.transcript.to_jsonl()
    bad = 0
    for mt in tp.MsgType:
        for size in (0, 1, 17, 1000):
            payload = bytes(g.integers(0, 256, size, dtype=np.uint8))
            msg = tp.Message(mt, payload, bytes(g.integers(0, 256, 8, dtype=np.uint8)),
                             int(g.integers(0, 2**32 - 1)), None)
            if tp.unframe(tp.frame(msg)) != msg:
                bad += 1
    return CriterionResult(10, "Determinism and transport", [
        Check("inproc == tcp transcript", float(same), 1.0, "byte-identical JSON-lines transcripts", "ge"),
        Check("framing round-trip failures", float(bad), 0.0, "unframe(frame(m)) == m for every type")],
        {"digest": a.transcript.digest(), "messages": len(a.transcript), "lambda": lam})


CRITERIA = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
            6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10}


def run_criterion(number: int, root_seed: int = 42, **overrides) -> CriterionResult:
    seed = derive_seed(root_seed, "criterion", number) % 2**32
    t0 = time.perf_counter()
    res = CRITERIA[number](seed, **overrides)
    res.elapsed = time.perf_counter() - t0
    res.seed = seed
    return res


def run_suite(root_seed: int = 42, only=None, echo=None) -> list:
    out = []
    for k in sorted(CRITERIA):
        if only and k not in only:
            continue
        res = run_criterion(k, root_seed)
        if echo:
            echo(res.line())
        out.append(res)
    return out


def suite_report(results, root_seed: int, timing: bool = False) -> dict:
    return {"suite": "acceptance", "root_seed": root_seed,
            "seed_derivation": "criterion seed = derive_seed(root, 'criterion', k) mod 2^32",
            "passed": all(r.passed for r in results),
            "criteria": [r.as_dict(timing) for r in results],
            "failed": [r.number for r in results if not r.passed],
            }
