"""Compiled kernels against the numpy fallback on identical inputs.

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each kernel is checked for equal output first, then timed (best of
``--repeat``).  A protocol-level timing runs one lane-batched QOT with each
backend in a fresh interpreter, since the backend is chosen at import.
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

from qotlab import _pykernels as pure

try:
    from qotlab import _ckernels as compiled
except ImportError:
    compiled = None


def _cases(rng):
    keys = rng.integers(0, 2**63, (4096, 2), dtype=np.uint64)
    ctr = np.array([0, 1, 2, 0], dtype=np.uint64)
    seeds = rng.integers(0, 2, (256, 64 + 8 - 1), dtype=np.uint8)
    xs = rng.integers(0, 2, (256, 64), dtype=np.uint8)
    tseeds = rng.integers(0, 2, (1024, 10 + 2 - 1), dtype=np.uint8)
    txs = rng.integers(0, 2, (1024, 10), dtype=np.uint8)
    n = 12
    psi = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    u1 = np.linalg.qr(rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))[0]
    u2 = np.linalg.qr(rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)))[0]
    N = 1 << 20
    bits, bases, mb, coins = (rng.integers(0, 2, N, dtype=np.uint8) for _ in range(4))
    rows = [rng.integers(0, 256, (32000, 48), dtype=np.uint8) for _ in range(4)]
    pick_idx = rng.integers(0, 4, 32000)
    return {
        "philox_blocks (4096 keys x 16 blocks)": ("philox_blocks", (keys, ctr, 16)),
        "toeplitz_hash (256 x 64 -> 8)": ("toeplitz_hash", (seeds, xs, 8)),
        "toeplitz_table (1024 seeds x 1024 inputs)": ("toeplitz_table", (tseeds, txs, 2)),
        "bb84_measure (2^20 qubits)": ("bb84_measure", (bits, bases, mb, coins)),
        "apply_1q (12 qubits)": ("apply_1q", (psi, u1, 5, n)),
        "apply_2q (12 qubits)": ("apply_2q", (psi, u2, 3, 9, n)),
        "pick_rows (4 x 32000 x 48 B)": ("pick_rows", (rows, pick_idx)),
    }


def _best(fn, args, repeat):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t)
    return best


def kernel_table(repeat: int, seed: int = 0) -> list:
    rng = np.random.default_rng(seed)
    out = []
    for label, (name, args) in _cases(rng).items():
        ref = getattr(pure, name)(*args)
        row = {"kernel": label, "numpy_s": _best(getattr(pure, name), args, repeat)}
        if compiled is not None:
            got = getattr(compiled, name)(*args)
            if not np.allclose(np.asarray(ref), np.asarray(got)):
                raise AssertionError(f"{name}: backends disagree")
            row["cython_s"] = _best(getattr(compiled, name), args, repeat)
            row["speedup"] = row["numpy_s"] / row["cython_s"]
        out.append(row)
    return out


_PROTOCOL = """
import time, numpy as np
from qotlab import kernels
from qotlab.qot import QotParams, qot_run
P = QotParams(8); L = 100
g = np.random.default_rng(0)
m = g.integers(0, 2, (2, L, 8), dtype=np.uint8); b = g.integers(0, 2, L, dtype=np.uint8)
qot_run(P, m[0], m[1], b, seed=1, record=False)
t = time.perf_counter(); r = qot_run(P, m[0], m[1], b, seed=2, record=False)
print(kernels.BACKEND, time.perf_counter() - t)
"""


def protocol_timing() -> dict:
    out = {}
    for pure_flag in ("0", "1"):
        env = dict(os.environ, QOTLAB_PURE=pure_flag)
        res = subprocess.run([sys.executable, "-c", _PROTOCOL], env=env, capture_output=True,
                             text=True, check=True)
        backend, secs = res.stdout.split()
        out[backend] = float(secs)
    return out


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json")
    ap.add_argument("--no-protocol", action="store_true")
    args = ap.parse_args(argv)
    if compiled is None:
        print("compiled extension not built; timing the numpy fallback only")
    rows = kernel_table(args.repeat)
    w = max(len(r["kernel"]) for r in rows)
    print(f"{'kernel':<{w}}  {'numpy ms':>10}  {'cython ms':>10}  {'speedup':>8}")
    for r in rows:
        c = f"{1e3 * r['cython_s']:10.3f}  {r['speedup']:7.1f}x" if "cython_s" in r else ""
        print(f"{r['kernel']:<{w}}  {1e3 * r['numpy_s']:10.3f}  {c}")
    report = {"kernels": rows}
    if not args.no_protocol:
        report["protocol"] = protocol_timing()
        print("QOT lambda=8, 100 lanes: " + ", ".join(f"{k} {v:.2f}s" for k, v in report["protocol"].items()))
    if args.json:
        with open(args.json, "w") as f:
            json.dump(report, f, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
