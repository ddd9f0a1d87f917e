"""Command-line harness: protocol runs, commitment demos, labs, the acceptance suite.

Every subcommand writes a JSON report (``--out``, ``-`` for stdout) and exits
0 when it completes with every bound met, 1 when a bound fails and 2 on a
usage error.  ``--config file.json`` supplies option values; flags given on
the command line win.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time

import numpy as np

from . import __version__, hashing, naor, prg, rewind, sampling, suite
from .engine import sel_all
from .equiv import EquivEngine
from .errors import QotlabError
from .extcom import CorruptBlocks, ExtcomEngine, ExtParams, FlipOneBit, default_inner, ext_extract
from .naor import NaorEngine
from .qot import QotParams, adversary_library, qot_engine, qot_run
from .rng import LaneRng, derive_seed
from .transport import run_pair

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# --------------------------------------------------------------------------
# helpers


def hex_bits(text: str, n: int) -> np.ndarray:
    """``n`` MSB-first bits from a hex string of exactly ceil(n/4) digits."""
    text = text.lower().removeprefix("0x")
    want = -(-n // 4)
    if len(text) != want:
        raise UsageError(f"expected {want} hex digits for {n} bits, got {len(text)}")
    try:
        v = int(text, 16)
    except ValueError:
        raise UsageError(f"not a hex string: {text!r}") from None
    bits = [(v >> (4 * want - 1 - i)) & 1 for i in range(4 * want)]
    return np.array(bits[:n], dtype=np.uint8)


def bits_hex(bits) -> str:
    bits = [int(x) for x in np.asarray(bits).reshape(-1)]
    bits += [0] * (-len(bits) % 4)
    return "".join(f"{int(''.join(map(str, bits[i:i + 4])), 2):x}" for i in range(0, len(bits), 4))


def _check(name, measured, bound, formula, kind="le", tol=0.0, sigma=0.0) -> dict:
    return suite.Check(name, float(measured), float(bound), formula, kind, float(tol), float(sigma)).as_dict()


def _report(args, checks, records=None, aggregate=None, extra=None) -> dict:
    config = {k: v for k, v in sorted(vars(args).items())
              if k not in ("func", "out", "config", "timing") and not k.startswith("_")}
    rep = {"command": args._command, "version": __version__, "config": config,
           "checks": checks, "passed": all(c["status"] != "fail" for c in checks)}
    if records is not None:
        rep["records"] = records
    if aggregate is not None:
        rep["aggregate"] = aggregate
    if extra:
        rep.update(extra)
    return rep


def _emit(args, report: dict, out=None) -> int:
    if getattr(args, "timing", False):
        report["timing"] = {"elapsed_s": time.perf_counter() - args._t0}
    text = json.dumps(report, indent=2, sort_keys=True, default=_json_default) + "\n"
    if args.out == "-":
        (out or sys.stdout).write(text)
    elif args.out:
        with open(args.out, "w") as f:
            f.write(text)
    return EXIT_OK if report["passed"] else EXIT_FAIL


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def _say(args, line: str) -> None:
    if args.out != "-":
        print(line)


def _sigma(p, n) -> float:
    return math.sqrt(max(p * (1 - p), 0.0) / n) if n else 0.0


# --------------------------------------------------------------------------
# subcommands


def cmd_qot_run(args) -> int:
    params = QotParams(args.lam)
    m0 = hex_bits(args.m0_hex, args.lam) if args.m0_hex else np.zeros(args.lam, np.uint8)
    m1 = hex_bits(args.m1_hex, args.lam) if args.m1_hex else np.ones(args.lam, np.uint8)
    if args.b not in (0, 1):
        raise UsageError("--b must be 0 or 1")
    lib = adversary_library()
    if args.adversary not in lib or args.adversary in ("honest_sender", "aborting_sender"):
        raise UsageError(f"unknown receiver adversary {args.adversary!r}")
    strategy = lib[args.adversary](args.bias) if args.adversary == "biased_basis_receiver" \
        else lib[args.adversary]()
    L = args.lanes
    b = np.full(L, args.b, np.uint8)
    honest = args.adversary == "honest"
    run = qot_run(params, np.tile(m0, (L, 1)), np.tile(m1, (L, 1)), b, seed=args.seed,
                  stack=args.stack, transport=args.transport, strategy=strategy,
                  strict=honest)
    records = []
    if run.sender is not None:
        aborted = run.sender.aborted
    else:
        aborted = np.ones(L, bool)
    out = run.receiver.output if run.receiver is not None and run.receiver.output is not None else None
    want = m1 if args.b else m0
    for j in range(L):
        got = None if out is None or aborted[j] else bits_hex(out[j])
        records.append({"lane": j, "sender_aborted": bool(aborted[j]), "receiver_output": got})
    correct = sum(r["receiver_output"] == bits_hex(want) for r in records)
    checks = []
    if honest:
        checks.append(_check("receiver outputs m_b", correct / L, 1.0,
                             "fraction of lanes with receiver output == m_b == 1", "ge"))
    if run.sender_abort is not None:
        _say(args, f"sender: abort ({run.sender_abort})")
    elif aborted.any():
        _say(args, f"sender: aborted {int(aborted.sum())} of {L} lanes")
    else:
        _say(args, f"sender: sent m0={bits_hex(m0)} m1={bits_hex(m1)}")
    first = records[0]["receiver_output"]
    _say(args, f"receiver: b={args.b} output={first if first is not None else 'abort'}"
               + (f" (m{args.b})" if first == bits_hex(want) else ""))
    if args.transcript and run.transcript is not None:
        with open(args.transcript, "w") as f:
            f.write(run.transcript.to_jsonl())
    extra = {"transcript_digest": run.transcript.digest() if run.transcript is not None else None,
             "stack_note": "cheap = equiv over naor; not extractable against quantum committers"
             if args.stack == "cheap" else "ee = equiv(extcom(equiv(naor)))"}
    agg = {"lanes": L, "sender_aborts": int(aborted.sum()), "correct": int(correct)}
    return _emit(args, _report(args, checks, records, agg, extra))


def _layer_engine(layer: str, lam: int, seed_len: int):
    base = NaorEngine(prg.stream_prg(seed_len))
    if layer == "naor":
        return base
    if layer == "equiv":
        return EquivEngine(base, lam)
    if layer == "extcom":
        return ExtcomEngine(ExtParams.preset(lam), default_inner(lam, seed_len))
    if layer == "ee":
        return qot_engine(QotParams(lam), "ee")
    raise UsageError(f"unknown layer {layer!r}")


def cmd_commit_demo(args) -> int:
    eng = _layer_engine(args.layer, args.lam, args.seed_len)
    L = args.lanes
    bits = np.random.default_rng(derive_seed(args.seed, "bits")).integers(0, 2, L, dtype=np.uint8)
    if args.bit is not None:
        bits[:] = args.bit
    crng = LaneRng.from_seed(args.seed, L, "committer")
    rrng = LaneRng.from_seed(args.seed, L, "receiver")
    out_c, out_r = run_pair(eng.commit_c(bits, crng), eng.commit_r(L, rrng))
    if not (out_c.ok and out_r.ok):
        raise (out_c.abort or out_r.abort)
    out_c2, out_r2 = run_pair(eng.open_c([out_c.value], sel_all(L)),
                              eng.open_r([out_r.value], np.ones((L, 1), bool)))
    if not out_r2.ok:
        raise out_r2.abort
    _, opened, ok = out_r2.value
    good = ok & (opened == bits)
    records = [{"lane": j, "bit": int(bits[j]), "opened": int(opened[j]), "accepted": bool(ok[j])}
               for j in range(L)]
    _say(args, f"{eng.describe()}: {int(good.sum())}/{L} lanes committed and opened correctly")
    checks = [_check("honest open accepted", good.mean(), 1.0, "fraction of accepted correct openings == 1", "ge")]
    return _emit(args, _report(args, checks, records, {"lanes": L, "accepted": int(good.sum())},
                               {"engine": eng.describe()}))


def cmd_extract_test(args) -> int:
    eng = ExtcomEngine(ExtParams.preset(args.lam))
    script = {"honest": None, "corrupt": CorruptBlocks(args.corrupt or math.ceil(args.lam / 2)),
              "flip": FlipOneBit()}[args.committer]
    bad = acc = 0
    records = []
    for j in range(0, args.runs, args.batch):
        L = min(args.batch, args.runs - j)
        bits = np.random.default_rng([args.seed, j]).integers(0, 2, L, dtype=np.uint8)
        r = ext_extract(eng, bits, LaneRng.from_seed(args.seed, L, "c", j),
                        LaneRng.from_seed(args.seed, L, "r", j), script=script)
        for k in range(L):
            records.append({"run": j + k, "bit": int(bits[k]), "extracted": int(r.b_star[k]),
                            "accepted": bool(r.accepted[k]), "opened": int(r.opened[k])})
        bad += int((r.accepted & (r.b_star != r.opened)).sum())
        acc += int(r.accepted.sum())
    bound = 2.0 ** (-args.lam / 2)
    sig = _sigma(bound, args.runs)
    rate = bad / args.runs
    _say(args, f"extract: lambda={args.lam} committer={args.committer} accepted={acc}/{args.runs} "
               f"disagreements={bad} bound={bound:.4g}")
    checks = [_check("accept and extracted != opened", rate, bound,
                     "Pr[accept and extracted != opened] <= 2^(-lambda/2) + 4 sigma", "le", 4 * sig, sig)]
    return _emit(args, _report(args, checks, records, {"runs": args.runs, "accepted": acc, "bad": bad}))


def cmd_equivocate_test(args) -> int:
    res = suite.criterion_4(args.seed, samples=args.samples, lam=args.lam, seed_len=args.seed_len)
    checks = [c.as_dict() for c in res.checks]
    for c in checks:
        _say(args, f"{c['name']}: {c['measured']:.4g} ({c['status']})")
    return _emit(args, _report(args, checks, aggregate=res.details))


def cmd_binding_audit(args) -> int:
    spec = prg.get(args.prg, args.seed_len)
    audit = naor.binding_audit(spec)
    _say(args, f"{spec.name}: {audit.bad_u_count}/{audit.total_u} first messages admit a double opening "
               f"(fraction {audit.fraction:.4g}, union bound 2^(-s) = {2.0 ** -spec.seed_len:.4g})")
    checks = [_check("bad first messages", audit.fraction, 2.0 ** -spec.seed_len,
                     "#{u : u = G(s0) xor G(s1)} / 2^(3s) <= 2^(-s)")]
    return _emit(args, _report(args, checks, aggregate=audit.as_dict()))


def cmd_sampling_lab(args) -> int:
    checks = []
    for bc in sampling.classical_lab(args.n, args.delta, args.trials, args.seed):
        checks.append(_check(bc.name, bc.measured, min(1.0, bc.bound), bc.formula, "le", 4 * bc.sigma, bc.sigma))
    tail = sampling.disagreement_tail(args.lam)
    freq = sampling.hoeffding_check(args.lam, args.trials, np.random.default_rng([args.seed, 1]))
    sig = _sigma(tail, args.trials)
    checks.append(_check(f"disagreement tail lambda={args.lam}", freq, tail,
                         "|freq - Pr[Bin(8 lambda, 1/2) <= 3 lambda]| <= 4 sigma", "near", 4 * sig, sig))
    t = args.guess_t
    sp = sampling.SamplingParams(4 * t, t, 0.1)
    st = sampling.quantum_sampling_experiment(sp, sampling.guess_everything(), args.trials // 10 or 1,
                                              np.random.default_rng([args.seed, 2]))
    oracle = sampling.guess_abort_probability(t)
    s2 = _sigma(oracle, st.trials)
    checks.append(_check(f"guess-everything abort, t={t}", st.abort_rate, oracle,
                         "|abort - (1 - (3/4)^t)| <= 4 sigma", "near", 4 * s2, s2))
    hon = sampling.quantum_sampling_experiment(sp, sampling.honest_measuring(), st.trials,
                                               np.random.default_rng([args.seed, 3]))
    checks.append(_check("honest measuring: abort or min-entropy shortfall", hon.abort_rate + hon.shortfall_rate,
                         0.0, "Pr[abort] + Pr[not aborted and H_min(X_S | view) < s - eps |S|] == 0"))
    for c in checks:
        _say(args, f"{c['name']}: measured {c['measured']:.4g} bound {c['bound']:.4g} {c['status']}")
    return _emit(args, _report(args, checks))


def cmd_rewind_lab(args) -> int:
    if args.corpus == "default":
        circuits = rewind.default_corpus(args.count, args.qubits, args.q, min(0.01, args.eps), seed=args.seed)
    else:
        circuits = rewind.load_corpus(args.corpus)
    reports = rewind.rewind_lab(circuits, args.eps, args.q, args.probes, seed=args.seed)
    checks = []
    for i, r in enumerate(reports):
        checks.append(_check(f"circuit {i}", r.td_measured, min(1.0, r.td_bound),
                             "TD <= min(1, 4 sqrt(eps) log2(1/eps) / (p0 (1 - p0)))"))
        if not r.trend_ok:
            checks.append(_check(f"circuit {i} trend", 1.0, 0.0, "td non-increasing in iterations"))
    for i, r in enumerate(reports):
        _say(args, f"circuit {i}: p0={r.p0:.4f} iterations={r.iterations} td={r.td_measured:.3g} "
                   f"bound={r.td_bound:.3g} {r.status}")
    return _emit(args, _report(args, checks, [r.as_dict() for r in reports]))


def cmd_lhl_lab(args) -> int:
    params = hashing.HashParams(args.n, args.ell)
    checks = []
    for h in args.h:
        dist = hashing.flat_distribution(args.n, h, np.random.default_rng([args.seed, h]))
        d = hashing.lhl_empirical(params, dist)
        checks.append(_check(f"H_inf={h}", d, hashing.lhl_bound(h, args.ell),
                             "SD((s, h(s,X)), (s, U)) <= 2^-(1 + (H_inf - ell)/2)"))
        _say(args, f"H_inf={h}: distance {d:.6g} bound {hashing.lhl_bound(h, args.ell):.6g}")
    return _emit(args, _report(args, checks))


def cmd_suite_run(args) -> int:
    only = set(args.only) if args.only else None
    results = suite.run_suite(args.seed, only, echo=lambda line: _say(args, line))
    rep = suite.suite_report(results, args.seed, timing=args.timing)
    rep["command"] = args._command
    for r in results:
        if not r.passed:
            print(f"criterion {r.number} failed: {r.title}", file=sys.stderr)
    return _emit(args, rep)


def render_rows(report: dict) -> list:
    """Flatten a report's bound checks (suite reports included) to CSV rows."""
    rows = []
    if "criteria" in report:
        for c in report["criteria"]:
            for ch in c["checks"]:
                rows.append({"criterion": c["criterion"], **ch})
    else:
        for ch in report.get("checks", []):
            rows.append({"criterion": "", **ch})
    return rows


def cmd_report_render(args) -> int:
    try:
        with open(args.input) as f:
            report = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise UsageError(f"cannot read report: {e}") from None
    fields = ["criterion", "name", "measured", "bound", "kind", "tol", "sigma", "status", "formula"]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    w.writerows(render_rows(report))
    if args.csv == "-":
        sys.stdout.write(buf.getvalue())
    else:
        with open(args.csv, "w") as f:
            f.write(buf.getvalue())
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def _common(p, out_default="report.json"):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=out_default, help="JSON report path, '-' for stdout")
    p.add_argument("--config", help="JSON file of option values; flags win")
    p.add_argument("--timing", action="store_true", help="add a timing field to the report")


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    root = _Parser(prog="qotlab", description=__doc__.splitlines()[0])
    root.add_argument("--version", action="version", version=__version__)
    top = root.add_subparsers(dest="group", required=True, parser_class=_Parser)
    leaves = {}

    def leaf(group, name, func, help_text):
        g = groups.get(group)
        if g is None:
            gp = top.add_parser(group)
            g = groups[group] = gp.add_subparsers(dest="action", required=True, parser_class=_Parser)
        p = g.add_parser(name, help=help_text)
        p.set_defaults(func=func, _command=f"{group} {name}")
        leaves[(group, name)] = p
        return p

    groups: dict = {}

    p = leaf("qot", "run", cmd_qot_run, "one oblivious-transfer run (or a batch of lanes)")
    p.add_argument("--lambda", dest="lam", type=int, default=8)
    p.add_argument("--b", type=int, default=0)
    p.add_argument("--m0-hex")
    p.add_argument("--m1-hex")
    p.add_argument("--lanes", type=int, default=1)
    p.add_argument("--stack", choices=["cheap", "ee"], default="cheap")
    p.add_argument("--transport", choices=["inproc", "tcp"], default="inproc")
    p.add_argument("--adversary", default="honest")
    p.add_argument("--bias", type=float, default=0.9)
    p.add_argument("--transcript", help="write the JSON-lines transcript here")
    _common(p)

    p = leaf("commit", "demo", cmd_commit_demo, "commit and open through one layer")
    p.add_argument("--layer", choices=["naor", "equiv", "extcom", "ee"], default="naor")
    p.add_argument("--lambda", dest="lam", type=int, default=4)
    p.add_argument("--seed-len", type=int, default=128)
    p.add_argument("--lanes", type=int, default=8)
    p.add_argument("--bit", type=int, choices=[0, 1])
    _common(p)

    p = leaf("extract", "test", cmd_extract_test, "extractor agreement against scripted committers")
    p.add_argument("--lambda", dest="lam", type=int, default=4)
    p.add_argument("--runs", type=int, default=200)
    p.add_argument("--batch", type=int, default=50)
    p.add_argument("--committer", choices=["honest", "corrupt", "flip"], default="honest")
    p.add_argument("--corrupt", type=int, help="blocks to corrupt (default ceil(lambda/2))")
    _common(p)

    p = leaf("equivocate", "test", cmd_equivocate_test, "classical equivocator against real commits")
    p.add_argument("--lambda", dest="lam", type=int, default=8)
    p.add_argument("--samples", type=int, default=2000)
    p.add_argument("--seed-len", type=int, default=128)
    _common(p)

    p = leaf("binding", "audit", cmd_binding_audit, "exhaustive double-opening count for a toy generator")
    p.add_argument("--prg", choices=["repeat", "random", "injective"], default="random")
    p.add_argument("--seed-len", type=int, default=4)
    _common(p)

    p = leaf("sampling", "lab", cmd_sampling_lab, "classical sampling, disagreement tail, guessing adversary")
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--delta", type=float, nargs="+", default=[0.25, 0.3])
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--lambda", dest="lam", type=int, default=8)
    p.add_argument("--guess-t", type=int, default=4)
    _common(p)

    p = leaf("rewind", "lab", cmd_rewind_lab, "rewinding bound over a circuit corpus")
    p.add_argument("--corpus", default="default", help="'default' or a JSON corpus file")
    p.add_argument("--eps", type=float, default=0.01)
    p.add_argument("--q", type=float, default=0.5)
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--qubits", type=int, default=4)
    p.add_argument("--probes", type=int, default=4, help="Haar-random inputs per circuit")
    _common(p)

    p = leaf("lhl", "lab", cmd_lhl_lab, "exhaustive leftover-hash distances")
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--ell", type=int, default=2)
    p.add_argument("--h", type=int, nargs="+", default=[2, 6, 10])
    _common(p)

    p = leaf("report", "render", cmd_report_render, "flatten a JSON report to CSV")
    p.add_argument("input")
    p.add_argument("--csv", default="-")

    p = leaf("suite", "run", cmd_suite_run, "the acceptance suite")
    p.add_argument("--only", type=int, nargs="+", choices=sorted(suite.CRITERIA))
    _common(p)
    p.set_defaults(seed=42)
    return root, leaves


def _apply_config(parser, leaves, argv, args):
    """Re-parse with the config file's values as defaults, so explicit flags still win."""
    if not getattr(args, "config", None):
        return args
    try:
        with open(args.config) as f:
            cfg = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise UsageError(f"cannot read config: {e}") from None
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    group, action = args._command.split()
    leaf = leaves[(group, action)]
    known = {a.dest for a in leaf._actions}
    cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    cfg = {("lam" if k == "lambda" else k): v for k, v in cfg.items()}
    unknown = sorted(set(cfg) - known - {"config"})
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    leaf.set_defaults(**cfg)
    return parser.parse_args(argv)


def cli(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, leaves = build_parser()
    try:
        args = parser.parse_args(argv)
        args = _apply_config(parser, leaves, argv, args)
        args._t0 = time.perf_counter()
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (QotlabError, ValueError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(cli())
